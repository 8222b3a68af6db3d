#include "rsd/relation_decoder.hpp"

#include <algorithm>
#include <cmath>

#include "rsd/errors.hpp"

namespace rsd {

namespace {

constexpr double kSymmetryTolerance = 1e-12;

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void check_heads(const MembershipMatrix& s, const Matrix& head) {
  if (head.rows() != s.cols()) {
    throw ContractViolation("relation head has " + std::to_string(head.rows()) +
                            " rows for K = " + std::to_string(s.cols()));
  }
}

}  // namespace

ProxyMatrix::ProxyMatrix(Matrix values, std::string source_name)
    : values_(std::move(values)), source_name_(std::move(source_name)) {
  const Index n = values_.rows();
  if (n < 2 || values_.cols() != n) throw ContractViolation("proxy must be square with N >= 2");
  if (!values_.allFinite()) throw ContractViolation("proxy entries must be finite");
  for (Index i = 0; i < n; ++i) {
    if (std::abs(values_(i, i)) > kSymmetryTolerance) {
      throw ContractViolation("proxy diagonal must be zero (row " + std::to_string(i) + ")");
    }
    values_(i, i) = 0.0;
    for (Index j = i + 1; j < n; ++j) {
      const double a = values_(i, j);
      const double b = values_(j, i);
      if (std::abs(a - b) > kSymmetryTolerance) {
        throw ContractViolation("proxy is not symmetric at (" + std::to_string(i) + ", " +
                                std::to_string(j) + ")");
      }
      const double mean = 0.5 * (a + b);
      if (mean < 0.0 || mean > 1.0) {
        throw ContractViolation("proxy entry outside [0, 1] at (" + std::to_string(i) + ", " +
                                std::to_string(j) + ")");
      }
      values_(i, j) = values_(j, i) = mean;
    }
  }
}

std::string_view to_string(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::dual: return "dual";
    case DecoderKind::dot_only: return "dot";
    case DecoderKind::poincare_only: return "poincare";
  }
  return "dual";
}

DecoderKind parse_decoder_kind(std::string_view text) {
  if (text == "dual") return DecoderKind::dual;
  if (text == "dot" || text == "dot-only") return DecoderKind::dot_only;
  if (text == "poincare" || text == "poincare-only") return DecoderKind::poincare_only;
  throw ContractViolation("unknown decoder kind: " + std::string(text));
}

void RelationHeads::validate() const {
  if (!(temperature > 0.0)) throw ContractViolation("temperature must be positive");
  if (!(ball_margin > 0.0 && ball_margin < 1.0)) {
    throw ContractViolation("ball margin must lie in (0, 1)");
  }
  if (dot.cols() < 1 || poincare.cols() != dot.cols() || poincare.rows() != dot.rows()) {
    throw ContractViolation("relation heads must share shape K x m with m >= 1");
  }
}

RouterParams RouterParams::initialize(Index k, Index hidden_dim, std::mt19937_64& rng) {
  RouterParams r;
  r.w1.resize(hidden_dim, 3 * k);
  r.w2.resize(2, hidden_dim);
  fill_gaussian(r.w1, 1.0 / std::sqrt(static_cast<double>(3 * k)), rng);
  fill_gaussian(r.w2, 1.0 / std::sqrt(static_cast<double>(hidden_dim)), rng);
  r.b1 = Vector::Zero(hidden_dim);
  r.b2 = Vector::Zero(2);
  return r;
}

Matrix dot_head(const MembershipMatrix& s, const RelationHeads& heads) {
  heads.validate();
  check_heads(s, heads.dot);
  const Matrix q = s.values() * heads.dot;
  const double scale = std::sqrt(static_cast<double>(heads.head_dim())) * heads.temperature;
  const Index n = s.rows();
  Matrix out = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      out(i, j) = out(j, i) = sigmoid(q.row(i).dot(q.row(j)) / scale);
    }
  }
  return out;
}

double arcosh1p(double u) {
  u = std::max(u, 0.0);
  return std::log1p(u + std::sqrt(u * (2.0 + u)));
}

double poincare_distance(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ContractViolation("poincare_distance: dimension mismatch");
  const double aa = a.squaredNorm();
  const double bb = b.squaredNorm();
  if (!(aa < 1.0) || !(bb < 1.0)) {
    throw ContractViolation("poincare_distance: argument outside the open unit ball");
  }
  const double gap = (a - b).squaredNorm();
  return arcosh1p(2.0 * gap / ((1.0 - aa) * (1.0 - bb)));
}

Matrix project_to_ball(const Matrix& z, double ball_margin, double epsilon) {
  Matrix y(z.rows(), z.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    const double norm = z.row(i).norm();
    y.row(i) = ((1.0 - ball_margin) * std::tanh(norm) / std::max(norm, epsilon)) * z.row(i);
  }
  return y;
}

Matrix poincare_head(const MembershipMatrix& s, const RelationHeads& heads, double epsilon) {
  heads.validate();
  check_heads(s, heads.poincare);
  const Matrix y = project_to_ball(s.values() * heads.poincare, heads.ball_margin, epsilon);
  const Index n = s.rows();
  Matrix out = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double d = poincare_distance(y.row(i).transpose(), y.row(j).transpose());
      out(i, j) = out(j, i) = std::exp(-d * d / heads.temperature);
    }
  }
  return out;
}

Vector pair_features(const Eigen::Ref<const Vector>& si, const Eigen::Ref<const Vector>& sj) {
  const Index k = si.size();
  Vector phi(3 * k);
  phi.segment(0, k) = si + sj;
  phi.segment(k, k) = (si - sj).cwiseAbs();
  phi.segment(2 * k, k) = si.cwiseProduct(sj);
  return phi;
}

double router_probability(const RouterParams& router, const Vector& phi, Vector* hidden) {
  if (phi.size() != router.w1.cols()) {
    throw ContractViolation("router expects " + std::to_string(router.w1.cols()) +
                            " pair features, got " + std::to_string(phi.size()));
  }
  Vector h = (router.w1 * phi + router.b1).array().tanh().matrix();
  const Vector logits = router.w2 * h + router.b2;
  // Two-way softmax, first coordinate.
  const double p0 = sigmoid(logits(0) - logits(1));
  if (hidden) *hidden = std::move(h);
  return p0;
}

Matrix router_gate(const MembershipMatrix& s, const RouterParams& router) {
  const Index n = s.rows();
  const Matrix st = s.values().transpose();
  Matrix g = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double gij = router_probability(router, pair_features(st.col(i), st.col(j)));
      const double gji = router_probability(router, pair_features(st.col(j), st.col(i)));
      g(i, j) = g(j, i) = 0.5 * (gij + gji);
    }
  }
  return g;
}

DecodedProxy decode_proxy_parts(const MembershipMatrix& s, const RelationHeads& heads,
                                const RouterParams& router, DecoderKind kind, double epsilon) {
  const Index n = s.rows();
  DecodedProxy out;
  out.dot = dot_head(s, heads);
  out.hyperbolic = poincare_head(s, heads, epsilon);
  switch (kind) {
    case DecoderKind::dual:
      out.gate = router_gate(s, router);
      break;
    case DecoderKind::dot_only:
      out.gate = Matrix::Ones(n, n);
      out.gate.diagonal().setZero();
      break;
    case DecoderKind::poincare_only:
      out.gate = Matrix::Zero(n, n);
      break;
  }
  out.combined = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double g = out.gate(i, j);
      out.combined(i, j) = g * out.dot(i, j) + (1.0 - g) * out.hyperbolic(i, j);
    }
  }
  return out;
}

Matrix decode_proxy(const MembershipMatrix& s, const RelationHeads& heads,
                    const RouterParams& router, DecoderKind kind, double epsilon) {
  return decode_proxy_parts(s, heads, router, kind, epsilon).combined;
}

double relation_mix_weight(const Matrix& gate) {
  const Index n = gate.rows();
  if (n < 2 || gate.cols() != n) throw ContractViolation("gate must be square with N >= 2");
  return (gate.sum() - gate.diagonal().sum()) / static_cast<double>(n * (n - 1));
}

}  // namespace rsd
