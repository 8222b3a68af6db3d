#include "rsd/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "rsd/errors.hpp"

namespace rsd {

double relative_reconstruction_error(const Block& block, const MembershipMatrix& s,
                                     const PoleMatrix& poles, double epsilon) {
  return (block.coords() - reconstruct(s, poles)).norm() /
         std::max(block.coords().norm(), epsilon);
}

Vector component_mass(const MembershipMatrix& s) {
  return s.values().colwise().mean().transpose();
}

Vector assignment_entropy(const MembershipMatrix& s) {
  Vector h = Vector::Zero(s.rows());
  for (Index i = 0; i < s.rows(); ++i) {
    for (Index k = 0; k < s.cols(); ++k) {
      const double p = s(i, k);
      if (p > 0.0) h(i) -= p * std::log(p);
    }
  }
  return h;
}

std::vector<Index> mass_order(const Vector& masses) {
  std::vector<Index> order(static_cast<std::size_t>(masses.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return masses(a) > masses(b); });
  return order;
}

namespace {

Matrix permute_rows(const Matrix& m, std::span<const Index> perm) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t c = 0; c < perm.size(); ++c) out.row(static_cast<Index>(c)) = m.row(perm[c]);
  return out;
}

Matrix permute_cols(const Matrix& m, std::span<const Index> perm) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t c = 0; c < perm.size(); ++c) out.col(static_cast<Index>(c)) = m.col(perm[c]);
  return out;
}

RouterParams permute_router(const RouterParams& r, std::span<const Index> perm) {
  const Index k = static_cast<Index>(perm.size());
  RouterParams out = r;
  for (Index block = 0; block < 3; ++block) {
    for (Index c = 0; c < k; ++c) out.w1.col(block * k + c) = r.w1.col(block * k + perm[c]);
  }
  return out;
}

void check_permutation(std::span<const Index> perm, Index k) {
  if (static_cast<Index>(perm.size()) != k) throw ContractViolation("permutation has wrong length");
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  for (Index p : perm) {
    if (p < 0 || p >= k || seen[static_cast<std::size_t>(p)]) {
      throw ContractViolation("not a permutation");
    }
    seen[static_cast<std::size_t>(p)] = true;
  }
}

}  // namespace

CanonicalFit mass_canonicalize(const MembershipMatrix& s, const PoleMatrix& poles,
                               const RelationHeads& heads, const RouterParams& router) {
  CanonicalFit out;
  out.permutation = mass_order(component_mass(s));
  out.memberships = permute_cols(s.values(), out.permutation);
  out.poles = permute_rows(poles, out.permutation);
  out.heads = heads;
  out.heads.dot = permute_rows(heads.dot, out.permutation);
  out.heads.poincare = permute_rows(heads.poincare, out.permutation);
  out.router = permute_router(router, out.permutation);
  return out;
}

RsdModel permute_components(const RsdModel& model, std::span<const Index> permutation) {
  check_permutation(permutation, model.poles.rows());
  RsdModel out = model;
  out.encoder.w2 = permute_rows(model.encoder.w2, permutation);
  for (std::size_t c = 0; c < permutation.size(); ++c) {
    out.encoder.b2(static_cast<Index>(c)) = model.encoder.b2(permutation[c]);
  }
  out.poles = permute_rows(model.poles, permutation);
  out.heads.dot = permute_rows(model.heads.dot, permutation);
  out.heads.poincare = permute_rows(model.heads.poincare, permutation);
  out.router = permute_router(model.router, permutation);
  return out;
}

double proxy_mae(const ProxyMatrix& proxy, const Matrix& predicted, const PairList& held_out) {
  const Index n = proxy.size();
  if (predicted.rows() != n || predicted.cols() != n) {
    throw ContractViolation("proxy_mae: shape mismatch");
  }
  const Matrix& a = proxy.values();
  if (!held_out.empty()) {
    double total = 0.0;
    for (const auto& [i, j] : held_out) {
      if (i < 0 || j < 0 || i >= n || j >= n || i == j) {
        throw ContractViolation("proxy_mae: invalid held-out pair");
      }
      total += std::abs(a(i, j) - predicted(i, j));
    }
    return total / static_cast<double>(held_out.size());
  }
  if (n < 2) throw ContractViolation("proxy_mae: empty selection");
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i != j) total += std::abs(a(i, j) - predicted(i, j));
    }
  }
  return total / static_cast<double>(n * (n - 1));
}

WitnessRecord witness_report(double loss_x, double loss_a, double eta_x, double eta_a) {
  if (!(eta_x > 0.0) || !(eta_a > 0.0)) throw ContractViolation("budgets must be positive");
  WitnessRecord w;
  w.eta_x = eta_x;
  w.eta_a = eta_a;
  w.loss_x = loss_x;
  w.loss_a = loss_a;
  w.coordinate_margin = eta_x - loss_x;
  w.proxy_margin = eta_a - loss_a;
  w.coordinate_pass = loss_x <= eta_x;
  w.proxy_pass = loss_a <= eta_a;
  w.witness = w.coordinate_pass && w.proxy_pass;
  return w;
}

std::vector<RankedItem> residual_ranking(const Block& block, const ResidualMatrix& r,
                                         Index top_n) {
  const Index n = block.size();
  if (top_n < 0 || top_n > n) throw ContractViolation("residual_ranking: topN out of range");
  if (r.per_item_norm.size() != n) throw ContractViolation("residual_ranking: shape mismatch");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return r.per_item_norm(a) > r.per_item_norm(b);
  });
  std::vector<RankedItem> out;
  for (Index t = 0; t < top_n; ++t) {
    const Index i = order[static_cast<std::size_t>(t)];
    out.push_back({i, block.items()[static_cast<std::size_t>(i)], r.per_item_norm(i)});
  }
  return out;
}

std::vector<ReadoutWord> neighbor_readout(const Vector& direction, const EmbeddingTable& vocab,
                                          Index k, std::span<const std::string> exclude_items) {
  if (vocab.size() == 0) throw ContractViolation("neighbor_readout: empty vocabulary");
  if (direction.size() != vocab.dim()) throw ContractViolation("neighbor_readout: dimension mismatch");
  const double dnorm = direction.norm();
  if (!(dnorm > 0.0)) throw ContractViolation("neighbor_readout: zero direction");

  std::unordered_set<std::string> excluded;
  for (const auto& item : exclude_items) {
    excluded.insert(item);
    for (auto& t : tokenize(item)) excluded.insert(std::move(t));
  }

  std::vector<ReadoutWord> scored;
  scored.reserve(static_cast<std::size_t>(vocab.size()));
  const Vector unit = direction / dnorm;
  for (Index w = 0; w < vocab.size(); ++w) {
    const auto& token = vocab.tokens()[static_cast<std::size_t>(w)];
    if (excluded.count(token)) continue;
    const double norm = vocab.vectors().row(w).norm();
    if (!(norm > 0.0)) continue;
    scored.push_back({token, vocab.vectors().row(w).dot(unit) / norm});
  }
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(std::max<Index>(k, 0)),
                                                 scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                    scored.end(), [](const ReadoutWord& a, const ReadoutWord& b) {
                      return a.cosine > b.cosine;
                    });
  scored.resize(keep);
  return scored;
}

std::vector<Readout> direction_readouts(const PoleMatrix& poles, const Matrix& residual,
                                        const EmbeddingTable& vocab, Index k,
                                        std::span<const std::string> exclude_items) {
  std::vector<Readout> out;
  for (Index c = 0; c < poles.rows(); ++c) {
    const Vector direction = poles.row(c).transpose();
    if (direction.norm() > 0.0) {
      out.push_back({"c" + std::to_string(c), neighbor_readout(direction, vocab, k, exclude_items)});
    }
  }
  const Vector mean_residual = residual.colwise().mean().transpose();
  if (mean_residual.norm() > 0.0) {
    out.push_back({"R+", neighbor_readout(mean_residual, vocab, k, exclude_items)});
    out.push_back({"R-", neighbor_readout(-mean_residual, vocab, k, exclude_items)});
  }
  return out;
}

AuditReport build_audit_report(const std::string& block_name, const Block& block,
                               const ProxyMatrix& proxy, const FitTrace& trace, double eta_x,
                               double eta_a, const PairList& masked_pairs) {
  const double eps = trace.model.epsilon;
  const CanonicalFit canon = mass_canonicalize(MembershipMatrix(trace.memberships), trace.poles,
                                               trace.model.heads, trace.model.router);
  const MembershipMatrix s(canon.memberships);

  AuditReport r;
  r.block_name = block_name;
  r.proxy_source = proxy.source_name();
  r.items = block.items();
  r.n = block.size();
  r.k = s.cols();
  r.d = block.dim();
  r.decoder = trace.model.decoder;
  r.objective = trace.final_objective;
  r.rho_x = relative_reconstruction_error(block, s, canon.poles, eps);
  r.proxy_loss = trace.final_objective.loss_a;
  r.proxy_mae = proxy_mae(proxy, trace.predicted, masked_pairs);
  r.proxy_mae_held_out = !masked_pairs.empty();
  r.mix_weight = relation_mix_weight(trace.gate);
  r.component_masses = component_mass(s);
  for (Index c = 0; c < r.k; ++c) {
    if (r.component_masses(c) < kSmallMassThreshold) r.small_mass_components.push_back(c);
  }
  for (Index i = 0; i < r.n; ++i) {
    Index best = 0;
    s.values().row(i).maxCoeff(&best);
    r.dominant_component.push_back(best);
  }
  r.entropy = assignment_entropy(s);
  const ResidualMatrix res = residual(block, s, canon.poles);
  r.residual_norms = res.per_item_norm;
  r.residual_ranking = residual_ranking(block, res, r.n);
  r.witness = witness_report(trace.final_objective.loss_x, trace.final_objective.loss_a, eta_x, eta_a);

  const PullbackResult pb = pullback_poles(block, s);
  r.pullback.rho_learned = r.rho_x;
  r.pullback.rho_pullback = pb.residual.norm() / std::max(block.coords().norm(), eps);
  r.pullback.energy_x = pb.energy_x;
  r.pullback.energy_proj = pb.energy_proj;
  r.pullback.energy_res = pb.energy_res;
  r.pullback.orthogonality_error = pb.orthogonality_error;
  r.pullback.energy_gap = pb.energy_gap;

  r.permutation = canon.permutation;
  r.masked_pairs = masked_pairs;
  if (r.n == 2) {
    r.warnings.push_back(
        "block-size warning: N=2 leaves a single proxy pair to fit; treat low losses on this "
        "block as weak evidence");
  } else if (r.n <= r.k) {
    r.warnings.push_back("block-size warning: N <= K; memberships are underdetermined");
  }
  for (Index c : r.small_mass_components) {
    r.warnings.push_back("component c" + std::to_string(c) +
                         " has mass below 0.02: minority/outlier/collapse candidate");
  }

  r.coords = block.coords();
  r.proxy = proxy.values();
  r.memberships = canon.memberships;
  r.poles = canon.poles;
  r.predicted = trace.predicted;
  r.gate = trace.gate;
  return r;
}

}  // namespace rsd
