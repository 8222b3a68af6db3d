#pragma once

#include <random>
#include <string>
#include <string_view>

#include "rsd/block_model.hpp"

namespace rsd {

// Declared weak affinity proxy. Construction enforces 0 <= A_ij <= 1, a zero
// diagonal and exact symmetry (inputs must already be symmetric to 1e-12).
class ProxyMatrix {
 public:
  ProxyMatrix(Matrix values, std::string source_name);

  const Matrix& values() const { return values_; }
  const std::string& source_name() const { return source_name_; }
  Index size() const { return values_.rows(); }

 private:
  Matrix values_;
  std::string source_name_;
};

enum class DecoderKind { dual, dot_only, poincare_only };

std::string_view to_string(DecoderKind kind);
DecoderKind parse_decoder_kind(std::string_view text);

struct RelationHeads {
  Matrix dot;       // V, K x m
  Matrix poincare;  // U, K x m
  double temperature = 1.0;
  double ball_margin = 1e-3;

  Index head_dim() const { return dot.cols(); }
  void validate() const;
};

// Two-layer affine-tanh-affine map from 3K pair features to 2 logits.
struct RouterParams {
  Matrix w1;  // H_r x 3K
  Vector b1;  // H_r
  Matrix w2;  // 2 x H_r
  Vector b2;  // 2

  static RouterParams initialize(Index k, Index hidden_dim, std::mt19937_64& rng);
};

// sigmoid(q_i . q_j / (sqrt(m) tau)) with q = S V; zero diagonal.
Matrix dot_head(const MembershipMatrix& s, const RelationHeads& heads);

// Unit-ball hyperbolic distance. Throws ContractViolation when either point
// lies on or outside the unit sphere.
double poincare_distance(const Vector& a, const Vector& b);

// arcosh(1 + u) evaluated as log1p(u + sqrt(u (2 + u))) with u clamped to >= 0.
double arcosh1p(double u);

// Row-wise ball projection y = (1 - margin) tanh(|z|) z / max(|z|, eps).
Matrix project_to_ball(const Matrix& z, double ball_margin, double epsilon);

Matrix poincare_head(const MembershipMatrix& s, const RelationHeads& heads,
                     double epsilon = kDefaultEpsilon);

// phi_ij = (s_i + s_j, |s_i - s_j|, s_i * s_j).
Vector pair_features(const Eigen::Ref<const Vector>& si, const Eigen::Ref<const Vector>& sj);

// First softmax coordinate of h(phi). `hidden` receives the post-tanh layer.
double router_probability(const RouterParams& router, const Vector& phi, Vector* hidden = nullptr);

// Symmetrized gate (g_ij + g_ji) / 2 with zero diagonal.
Matrix router_gate(const MembershipMatrix& s, const RouterParams& router);

struct DecodedProxy {
  Matrix dot;
  Matrix hyperbolic;
  Matrix gate;      // all ones for dot-only, all zeros for poincare-only (off-diagonal)
  Matrix combined;  // g * dot + (1 - g) * hyperbolic
};

DecodedProxy decode_proxy_parts(const MembershipMatrix& s, const RelationHeads& heads,
                                const RouterParams& router,
                                DecoderKind kind = DecoderKind::dual,
                                double epsilon = kDefaultEpsilon);

Matrix decode_proxy(const MembershipMatrix& s, const RelationHeads& heads,
                    const RouterParams& router, DecoderKind kind = DecoderKind::dual,
                    double epsilon = kDefaultEpsilon);

// Mean of the N(N-1) off-diagonal gate entries.
double relation_mix_weight(const Matrix& gate);

}  // namespace rsd
