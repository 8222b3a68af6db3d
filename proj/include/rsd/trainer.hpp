#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "rsd/block_model.hpp"
#include "rsd/relation_decoder.hpp"

namespace rsd {

struct Hyperparams {
  Index k = 2;
  Index encoder_hidden = 32;
  Index head_dim = 8;
  double temperature = 1.0;
  double ball_margin = 1e-3;
  Index router_hidden = 16;
  double epsilon = kDefaultEpsilon;
  DecoderKind decoder = DecoderKind::dual;
};

// Every trainable tensor of one fit. The same layout doubles as the gradient
// and the Adam moment buffers.
struct RsdModel {
  EncoderParams encoder;
  PoleMatrix poles;  // K x D
  RelationHeads heads;
  RouterParams router;
  DecoderKind decoder = DecoderKind::dual;
  double epsilon = kDefaultEpsilon;

  static RsdModel initialize(const Hyperparams& hp, Index input_dim, std::uint64_t seed);

  // Flat views over every parameter tensor, in a fixed order.
  std::vector<std::span<double>> tensors();
  RsdModel zeros_like() const;
  Index parameter_count() const;
};

struct Objective {
  double loss_x = 0.0;
  double loss_a = 0.0;
  double lambda = 1.0;
  double total = 0.0;
};

using PairList = std::vector<std::pair<Index, Index>>;

struct TrainConfig {
  int steps = 500;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  double lambda = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  PairList masked_pairs;  // unordered pairs excluded from the proxy loss

  void validate() const;
};

struct FitTrace {
  std::vector<Objective> history;  // objective before each update, one entry per step
  RsdModel model;                  // parameters after the last update
  Objective final_objective;       // objective at `model`
  Matrix memberships;
  PoleMatrix poles;
  Matrix predicted;  // decoded proxy
  Matrix gate;
  // Final total within 1e-3 (relative) of the smallest total over the last
  // tenth of the run.
  bool converged = false;
};

// mean((X - S C)^2) / max(||X||_F, eps)
double loss_x(const Block& block, const MembershipMatrix& s, const PoleMatrix& poles,
              double epsilon = kDefaultEpsilon);

// Mean squared error over included entries divided by max(||A||_F, eps) over
// the full proxy. Masked unordered pairs drop both (i, j) and (j, i) from the
// numerator and from the entry count.
double loss_a(const ProxyMatrix& proxy, const Matrix& predicted, double epsilon = kDefaultEpsilon,
              const PairList& masked_pairs = {});

// Forward pass of the full model.
struct ModelOutputs {
  MembershipMatrix memberships;
  DecodedProxy decoded;
  Objective objective;
};

ModelOutputs evaluate_model(const RsdModel& model, const Block& block, const ProxyMatrix& proxy,
                            double lambda = 1.0, const PairList& masked_pairs = {});

// Objective and its gradient with respect to every tensor of `model`.
Objective objective_gradient(const RsdModel& model, const Block& block, const ProxyMatrix& proxy,
                             double lambda, const PairList& masked_pairs, RsdModel& gradient);

FitTrace train(const Block& block, const ProxyMatrix& proxy, const TrainConfig& config,
               const Hyperparams& hp);

struct GradientCheck {
  double max_relative_error = 0.0;
  Index worst_parameter = -1;
  RsdModel analytic;
  RsdModel numeric;
};

// Central differences with step 1e-5 over every parameter. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
GradientCheck gradient_check_detail(const RsdModel& model, const Block& block,
                                    const ProxyMatrix& proxy, double lambda = 1.0,
                                    const PairList& masked_pairs = {});

double gradient_check(const Block& block, const ProxyMatrix& proxy, const Hyperparams& hp,
                      std::uint64_t seed, double lambda = 1.0);

}  // namespace rsd
