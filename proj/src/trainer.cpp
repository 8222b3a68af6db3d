#include "rsd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rsd/errors.hpp"

namespace rsd {

namespace {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// Inclusion weights for the proxy loss: 1 for counted entries, 0 for masked ones.
Matrix inclusion_weights(Index n, const PairList& masked_pairs) {
  Matrix w = Matrix::Ones(n, n);
  if (masked_pairs.empty()) return w;
  for (const auto& [i, j] : masked_pairs) {
    if (i < 0 || j < 0 || i >= n || j >= n || i == j) {
      throw ContractViolation("masked pair (" + std::to_string(i) + ", " + std::to_string(j) +
                              ") is not a valid off-diagonal index pair");
    }
    w(i, j) = w(j, i) = 0.0;
  }
  const double off_diagonal_kept = w.sum() - static_cast<double>(n);
  if (off_diagonal_kept <= 0.0) {
    throw DegenerateObjective("holdout mask covers every off-diagonal proxy entry");
  }
  return w;
}

// d/du arcosh(1 + u) * arcosh(1 + u) / 2, i.e. arcosh(1+u) / sqrt(u (2 + u)).
double arcosh_ratio(double u, double d) {
  if (u < 1e-8) return 1.0 - u / 3.0;
  return d / std::sqrt(u * (2.0 + u));
}

// d/dn [tanh(n) / max(n, eps)]
double projection_scale_derivative(double n, double epsilon) {
  if (n <= epsilon) {
    const double t = std::tanh(n);
    return (1.0 - t * t) / epsilon;
  }
  if (n < 1e-3) return -2.0 * n / 3.0 + 8.0 * n * n * n / 15.0;
  const double t = std::tanh(n);
  return (n * (1.0 - t * t) - t) / (n * n);
}

}  // namespace

RsdModel RsdModel::initialize(const Hyperparams& hp, Index input_dim, std::uint64_t seed) {
  if (hp.k < 2) throw ContractViolation("K must be at least 2");
  if (hp.head_dim < 1 || hp.encoder_hidden < 1 || hp.router_hidden < 1) {
    throw ContractViolation("layer widths must be positive");
  }
  std::mt19937_64 rng(seed);
  RsdModel m;
  m.encoder = EncoderParams::initialize(input_dim, hp.encoder_hidden, hp.k, rng);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hp.k));
  m.poles.resize(hp.k, input_dim);
  fill_gaussian(m.poles, scale, rng);
  m.heads.dot.resize(hp.k, hp.head_dim);
  m.heads.poincare.resize(hp.k, hp.head_dim);
  fill_gaussian(m.heads.dot, scale, rng);
  fill_gaussian(m.heads.poincare, scale, rng);
  m.heads.temperature = hp.temperature;
  m.heads.ball_margin = hp.ball_margin;
  m.heads.validate();
  m.router = RouterParams::initialize(hp.k, hp.router_hidden, rng);
  m.decoder = hp.decoder;
  m.epsilon = hp.epsilon;
  return m;
}

std::vector<std::span<double>> RsdModel::tensors() {
  auto view = [](auto& t) { return std::span<double>(t.data(), static_cast<std::size_t>(t.size())); };
  return {view(encoder.w1), view(encoder.b1), view(encoder.w2), view(encoder.b2),
          view(poles),      view(heads.dot),  view(heads.poincare),
          view(router.w1),  view(router.b1),  view(router.w2),  view(router.b2)};
}

RsdModel RsdModel::zeros_like() const {
  RsdModel z = *this;
  for (auto t : z.tensors()) std::fill(t.begin(), t.end(), 0.0);
  return z;
}

Index RsdModel::parameter_count() const {
  Index total = 0;
  for (auto t : const_cast<RsdModel*>(this)->tensors()) total += static_cast<Index>(t.size());
  return total;
}

void TrainConfig::validate() const {
  if (steps < 1) throw ContractViolation("steps must be >= 1");
  if (!(learning_rate > 0.0)) throw ContractViolation("learning rate must be positive");
  if (!(lambda >= 0.0)) throw ContractViolation("lambda must be nonnegative");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw ContractViolation("Adam betas must lie in (0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ContractViolation("Adam epsilon must be positive");
}

double loss_x(const Block& block, const MembershipMatrix& s, const PoleMatrix& poles,
              double epsilon) {
  const Matrix r = block.coords() - reconstruct(s, poles);
  return r.squaredNorm() / static_cast<double>(r.size()) /
         std::max(block.coords().norm(), epsilon);
}

double loss_a(const ProxyMatrix& proxy, const Matrix& predicted, double epsilon,
              const PairList& masked_pairs) {
  const Index n = proxy.size();
  if (predicted.rows() != n || predicted.cols() != n) {
    throw ContractViolation("predicted proxy shape does not match the proxy");
  }
  const Matrix w = inclusion_weights(n, masked_pairs);
  const double sse = (w.array() * (proxy.values() - predicted).array().square()).sum();
  return sse / w.sum() / std::max(proxy.values().norm(), epsilon);
}

ModelOutputs evaluate_model(const RsdModel& model, const Block& block, const ProxyMatrix& proxy,
                            double lambda, const PairList& masked_pairs) {
  if (proxy.size() != block.size()) throw ContractViolation("proxy and block sizes differ");
  MembershipMatrix s = encode_memberships(model.encoder, block, model.epsilon);
  DecodedProxy decoded =
      decode_proxy_parts(s, model.heads, model.router, model.decoder, model.epsilon);
  Objective obj;
  obj.lambda = lambda;
  obj.loss_x = loss_x(block, s, model.poles, model.epsilon);
  obj.loss_a = loss_a(proxy, decoded.combined, model.epsilon, masked_pairs);
  obj.total = obj.loss_x + lambda * obj.loss_a;
  return {std::move(s), std::move(decoded), obj};
}

Objective objective_gradient(const RsdModel& model, const Block& block, const ProxyMatrix& proxy,
                             double lambda, const PairList& masked_pairs, RsdModel& grad) {
  const Index n = block.size();
  if (proxy.size() != n) throw ContractViolation("proxy and block sizes differ");
  const double eps = model.epsilon;
  const Matrix& x = block.coords();
  const Matrix& a = proxy.values();
  const Matrix& v = model.heads.dot;
  const Matrix& u = model.heads.poincare;
  const double tau = model.heads.temperature;
  const double margin = model.heads.ball_margin;
  const Index m = model.heads.head_dim();
  const Matrix weights = inclusion_weights(n, masked_pairs);

  // ---- forward ----
  Matrix hidden;
  const Matrix logits = model.encoder.forward(x, &hidden);
  const MembershipMatrix membership = memberships_from_logits(logits, eps);
  const Matrix& s = membership.values();
  const Matrix st = s.transpose();

  const Matrix r = x - s * model.poles;
  const double norm_x = std::max(x.norm(), eps);

  const Matrix q = s * v;
  const double dot_scale = std::sqrt(static_cast<double>(m)) * tau;
  const Matrix z = s * u;
  const Matrix y = project_to_ball(z, margin, eps);
  Vector y_sq(n);
  for (Index i = 0; i < n; ++i) y_sq(i) = Vector(y.row(i).transpose()).squaredNorm();

  Matrix dot = Matrix::Zero(n, n), hyp = Matrix::Zero(n, n), gate = Matrix::Zero(n, n);
  Matrix arg = Matrix::Zero(n, n), dist = Matrix::Zero(n, n), predicted = Matrix::Zero(n, n);
  const bool routed = model.decoder == DecoderKind::dual;
  const Index pair_count = n * (n - 1) / 2;
  Matrix router_hidden(routed ? model.router.w1.rows() : 0, routed ? pair_count : 0);
  Matrix features(routed ? 3 * s.cols() : 0, routed ? pair_count : 0);

  Index p = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j, ++p) {
      dot(i, j) = dot(j, i) = sigmoid(q.row(i).dot(q.row(j)) / dot_scale);
      const Vector yi = y.row(i).transpose();
      const Vector yj = y.row(j).transpose();
      const double gap = (yi - yj).squaredNorm();
      const double uij = 2.0 * gap / ((1.0 - y_sq(i)) * (1.0 - y_sq(j)));
      const double d = arcosh1p(uij);
      arg(i, j) = uij;
      dist(i, j) = d;
      hyp(i, j) = hyp(j, i) = std::exp(-d * d / tau);
      double g = 0.0;
      switch (model.decoder) {
        case DecoderKind::dual: {
          Vector phi = pair_features(st.col(i), st.col(j));
          Vector h;
          // phi_ij == phi_ji bitwise, so the symmetrized gate equals one evaluation.
          g = router_probability(model.router, phi, &h);
          router_hidden.col(p) = h;
          features.col(p) = phi;
          break;
        }
        case DecoderKind::dot_only: g = 1.0; break;
        case DecoderKind::poincare_only: g = 0.0; break;
      }
      gate(i, j) = gate(j, i) = g;
      predicted(i, j) = predicted(j, i) = g * dot(i, j) + (1.0 - g) * hyp(i, j);
    }
  }

  const double norm_a = std::max(a.norm(), eps);
  const double count = weights.sum();
  Objective obj;
  obj.lambda = lambda;
  obj.loss_x = r.squaredNorm() / static_cast<double>(r.size()) / norm_x;
  obj.loss_a =
      (weights.array() * (a - predicted).array().square()).sum() / count / norm_a;
  obj.total = obj.loss_x + lambda * obj.loss_a;

  // ---- backward ----
  grad = model.zeros_like();
  const Matrix d_recon = (-2.0 / (static_cast<double>(r.size()) * norm_x)) * r;
  grad.poles = s.transpose() * d_recon;
  Matrix ds = d_recon * model.poles.transpose();

  const double proxy_scale = lambda * 2.0 / (count * norm_a);
  Matrix dq = Matrix::Zero(n, m);
  Matrix dy = Matrix::Zero(n, m);
  const Index k = s.cols();
  p = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j, ++p) {
      // Both (i, j) and (j, i) share every forward quantity.
      const double dpred = proxy_scale * (weights(i, j) * (predicted(i, j) - a(i, j)) +
                                          weights(j, i) * (predicted(j, i) - a(j, i)));
      if (dpred == 0.0) continue;
      const double g = gate(i, j);

      const double ddot = dpred * g;
      if (ddot != 0.0) {
        const double dt = ddot * dot(i, j) * (1.0 - dot(i, j)) / dot_scale;
        dq.row(i) += dt * q.row(j);
        dq.row(j) += dt * q.row(i);
      }

      const double dhyp = dpred * (1.0 - g);
      if (dhyp != 0.0) {
        const double uij = arg(i, j);
        const double du = dhyp * hyp(i, j) * (-2.0 / tau) * arcosh_ratio(uij, dist(i, j));
        const double ai = 1.0 - y_sq(i);
        const double aj = 1.0 - y_sq(j);
        const double gap = uij * ai * aj / 2.0;
        const auto diff = (y.row(i) - y.row(j)).eval();
        dy.row(i) += du * (4.0 / (ai * aj) * diff + 4.0 * gap / (ai * ai * aj) * y.row(i));
        dy.row(j) += du * (-4.0 / (ai * aj) * diff + 4.0 * gap / (ai * aj * aj) * y.row(j));
      }

      if (routed) {
        const double dgate = dpred * (dot(i, j) - hyp(i, j));
        const double dlogit0 = dgate * g * (1.0 - g);
        Vector dlogits(2);
        dlogits << dlogit0, -dlogit0;
        const auto h = router_hidden.col(p);
        const auto phi = features.col(p);
        grad.router.w2 += dlogits * h.transpose();
        grad.router.b2 += dlogits;
        const Vector dpre =
            ((model.router.w2.transpose() * dlogits).array() * (1.0 - h.array().square())).matrix();
        grad.router.w1 += dpre * phi.transpose();
        grad.router.b1 += dpre;
        const Vector dphi = model.router.w1.transpose() * dpre;
        for (Index c = 0; c < k; ++c) {
          const double diff = s(i, c) - s(j, c);
          const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
          ds(i, c) += dphi(c) + sign * dphi(k + c) + s(j, c) * dphi(2 * k + c);
          ds(j, c) += dphi(c) - sign * dphi(k + c) + s(i, c) * dphi(2 * k + c);
        }
      }
    }
  }

  grad.heads.dot = s.transpose() * dq;
  ds += dq * v.transpose();

  Matrix dz = Matrix::Zero(n, m);
  for (Index i = 0; i < n; ++i) {
    const double norm = z.row(i).norm();
    if (norm == 0.0) continue;
    const double f = std::tanh(norm) / std::max(norm, eps);
    const double fprime = projection_scale_derivative(norm, eps);
    const double zdy = z.row(i).dot(dy.row(i));
    dz.row(i) = (1.0 - margin) * (f * dy.row(i) + (fprime / norm) * zdy * z.row(i));
  }
  grad.heads.poincare = s.transpose() * dz;
  ds += dz * u.transpose();

  // Row normalization and square transform.
  Matrix dlogits(n, k);
  for (Index i = 0; i < n; ++i) {
    double total = 0.0;
    for (Index c = 0; c < k; ++c) total += logits(i, c) * logits(i, c) + eps;
    const double centre = s.row(i).dot(ds.row(i));
    for (Index c = 0; c < k; ++c) {
      dlogits(i, c) = 2.0 * logits(i, c) * (ds(i, c) - centre) / total;
    }
  }

  grad.encoder.w2 = dlogits.transpose() * hidden;
  grad.encoder.b2 = dlogits.colwise().sum().transpose();
  const Matrix dpre =
      ((dlogits * model.encoder.w2).array() * (1.0 - hidden.array().square())).matrix();
  grad.encoder.w1 = dpre.transpose() * x;
  grad.encoder.b1 = dpre.colwise().sum().transpose();
  return obj;
}

FitTrace train(const Block& block, const ProxyMatrix& proxy, const TrainConfig& config,
               const Hyperparams& hp) {
  config.validate();
  if (proxy.size() != block.size()) throw ContractViolation("proxy and block sizes differ");
  // Fail early on a degenerate mask.
  inclusion_weights(block.size(), config.masked_pairs);

  FitTrace trace;
  RsdModel model = RsdModel::initialize(hp, block.dim(), config.seed);
  RsdModel first_moment = model.zeros_like();
  RsdModel second_moment = model.zeros_like();
  RsdModel grad = model.zeros_like();
  trace.history.reserve(static_cast<std::size_t>(config.steps));

  double beta1_power = 1.0;
  double beta2_power = 1.0;
  for (int step = 0; step < config.steps; ++step) {
    Objective obj;
    try {
      obj = objective_gradient(model, block, proxy, config.lambda, config.masked_pairs, grad);
    } catch (const FitDivergence& e) {
      throw FitDivergence(std::string("fit diverged at step ") + std::to_string(step) + ": " +
                              e.what(),
                          step);
    }
    if (!std::isfinite(obj.total)) {
      throw FitDivergence("non-finite loss at step " + std::to_string(step), step);
    }
    trace.history.push_back(obj);

    beta1_power *= config.adam_beta1;
    beta2_power *= config.adam_beta2;
    const auto params = model.tensors();
    const auto grads = grad.tensors();
    const auto m1 = first_moment.tensors();
    const auto m2 = second_moment.tensors();
    for (std::size_t t = 0; t < params.size(); ++t) {
      for (std::size_t e = 0; e < params[t].size(); ++e) {
        const double g = grads[t][e];
        m1[t][e] = config.adam_beta1 * m1[t][e] + (1.0 - config.adam_beta1) * g;
        m2[t][e] = config.adam_beta2 * m2[t][e] + (1.0 - config.adam_beta2) * g * g;
        const double m_hat = m1[t][e] / (1.0 - beta1_power);
        const double v_hat = m2[t][e] / (1.0 - beta2_power);
        params[t][e] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
      }
    }
  }

  ModelOutputs out = [&] {
    try {
      return evaluate_model(model, block, proxy, config.lambda, config.masked_pairs);
    } catch (const FitDivergence& e) {
      throw FitDivergence(std::string("fit diverged after the final step: ") + e.what(),
                          config.steps);
    }
  }();
  if (!std::isfinite(out.objective.total)) {
    throw FitDivergence("non-finite loss after the final step", config.steps);
  }
  trace.final_objective = out.objective;
  trace.memberships = out.memberships.values();
  trace.poles = model.poles;
  trace.predicted = out.decoded.combined;
  trace.gate = out.decoded.gate;
  trace.model = std::move(model);

  const std::size_t window = std::max<std::size_t>(1, trace.history.size() / 10);
  double recent_min = trace.final_objective.total;
  for (std::size_t t = trace.history.size() - window; t < trace.history.size(); ++t) {
    recent_min = std::min(recent_min, trace.history[t].total);
  }
  trace.converged = trace.final_objective.total - recent_min <=
                    1e-3 * std::max(std::abs(trace.final_objective.total), 1e-300);
  return trace;
}

GradientCheck gradient_check_detail(const RsdModel& model, const Block& block,
                                    const ProxyMatrix& proxy, double lambda,
                                    const PairList& masked_pairs) {
  constexpr double kStep = 1e-5;
  constexpr double kFloor = 1e-6;
  GradientCheck result;
  objective_gradient(model, block, proxy, lambda, masked_pairs, result.analytic);
  result.numeric = model.zeros_like();

  RsdModel probe = model;
  const auto probe_tensors = probe.tensors();
  const auto numeric = result.numeric.tensors();
  const auto analytic = result.analytic.tensors();
  Index flat = 0;
  for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
    for (std::size_t e = 0; e < probe_tensors[t].size(); ++e, ++flat) {
      const double original = probe_tensors[t][e];
      probe_tensors[t][e] = original + kStep;
      const double up = evaluate_model(probe, block, proxy, lambda, masked_pairs).objective.total;
      probe_tensors[t][e] = original - kStep;
      const double down =
          evaluate_model(probe, block, proxy, lambda, masked_pairs).objective.total;
      probe_tensors[t][e] = original;
      numeric[t][e] = (up - down) / (2.0 * kStep);
      const double an = analytic[t][e];
      const double nu = numeric[t][e];
      const double rel =
          std::abs(an - nu) / std::max({std::abs(an), std::abs(nu), kFloor});
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = flat;
      }
    }
  }
  return result;
}

double gradient_check(const Block& block, const ProxyMatrix& proxy, const Hyperparams& hp,
                      std::uint64_t seed, double lambda) {
  if (block.size() > 8 || block.dim() > 6) {
    throw ContractViolation("gradient_check is limited to N <= 8 and D <= 6");
  }
  const RsdModel model = RsdModel::initialize(hp, block.dim(), seed);
  return gradient_check_detail(model, block, proxy, lambda).max_relative_error;
}

}  // namespace rsd
