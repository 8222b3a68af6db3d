#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rsd/block_model.hpp"
#include "rsd/relation_decoder.hpp"
#include "rsd/trainer.hpp"

namespace rsd {

enum class GeneratorKind { same_geometry, misaligned, residual_injection, hyperbolic, mixed, scaled_dot };

std::string_view to_string(GeneratorKind kind);

struct SyntheticSpec {
  Index n = 18;
  Index k = 2;
  Index d = 16;
  std::vector<double> dirichlet_alpha{0.55, 0.55};
  double coord_noise_std = 0.01;
  GeneratorKind kind = GeneratorKind::same_geometry;
  double gamma = 0.0;  // residual-injection amplitude
  std::uint64_t seed = 0;
  // Planted decoder used to generate the proxy.
  Index head_dim = 8;
  double temperature = 1.0;
  double ball_margin = 1e-3;
  double dot_head_scale = 1.5;
  double poincare_head_scale = 2.0;

  void validate() const;
};

struct SyntheticFixture {
  Block block;
  ProxyMatrix proxy;
  MembershipMatrix memberships;        // S*, the coordinate-side geometry
  PoleMatrix poles;                    // C*
  RelationHeads planted_heads;         // V*, U*
  MembershipMatrix proxy_memberships;  // geometry behind A (differs from S* only when misaligned)
};

// Independent, reproducible sub-stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Rows drawn from Dirichlet(alpha) via normalized Gamma draws.
Matrix sample_dirichlet(Index n, const std::vector<double>& alpha, std::mt19937_64& rng);

SyntheticFixture generate_synthetic(const SyntheticSpec& spec);

// X' = X + gamma * G, with G a seeded Gaussian direction projected out of the
// column space of S, made orthogonal to the block's existing pullback
// residual, and scaled to unit Frobenius norm. Pullback residual energy at S
// then grows by exactly gamma^2.
Block inject_orthogonal_residual(const Block& block, const MembershipMatrix& s, double gamma,
                                 std::uint64_t seed);

struct HoldoutMask {
  PairList pairs;  // (i, j) with i < j, sorted
  double fraction = 0.0;
  std::uint64_t seed = 0;
};

// floor(fraction * N(N-1)/2) unordered off-diagonal pairs sampled without replacement.
HoldoutMask make_holdout_mask(Index n, double fraction, std::uint64_t seed);

// k-means++ seeding, Lloyd iterations (shift < 1e-8 or 200 iterations), then
// s_ik proportional to exp(-|x_i - mu_k|^2 / sigma^2), sigma^2 the mean squared
// distance to the nearest centre.
MembershipMatrix soft_kmeans_baseline(const Block& block, Index k, std::uint64_t seed);

struct BilinearFit {
  Matrix weights;  // K x K
  double proxy_mae = 0.0;
};

// Least-squares W over off-diagonal entries of A ~ S W S^T.
BilinearFit bilinear_decoder_fit(const MembershipMatrix& s, const ProxyMatrix& proxy);

// ---- synthetic control suite ----

struct ControlSettings {
  std::uint64_t fixture_seed = 7;
  std::vector<std::uint64_t> restart_seeds{7, 8, 9, 10, 11, 12, 13, 14};
  int steps = 3000;
  double learning_rate = 0.01;
  double lambda = 1.0;
  SyntheticSpec base{.coord_noise_std = 0.0};
  Hyperparams hp;
  std::vector<double> gammas{0.0, 0.25, 0.5, 1.0};
};

struct ControlRow {
  std::string check;
  std::string quantity;
  double value = 0.0;
  std::string criterion;  // empty when the row is informational
  bool pass = true;
};

struct ControlSummary {
  std::vector<ControlRow> rows;
  bool all_pass() const;
  const ControlRow* find(std::string_view check, std::string_view quantity) const;
};

struct RestartResult {
  std::uint64_t seed = 0;
  Objective objective;
  FitTrace trace;
};

// Fits every restart seed concurrently.
std::vector<RestartResult> run_restarts(const Block& block, const ProxyMatrix& proxy,
                                        const TrainConfig& base, const Hyperparams& hp,
                                        const std::vector<std::uint64_t>& seeds);

ControlSummary run_control_suite(const ControlSettings& settings);

// ---- held-out proxy bench ----

struct HeldoutSettings {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7};
  int steps = 320;
  double learning_rate = 0.025;
  double lambda = 1.0;
  double holdout_fraction = 0.2;
  SyntheticSpec base;
  Hyperparams hp;
  std::vector<GeneratorKind> generators{GeneratorKind::hyperbolic, GeneratorKind::mixed,
                                        GeneratorKind::scaled_dot};
  std::vector<DecoderKind> decoders{DecoderKind::dual, DecoderKind::dot_only,
                                    DecoderKind::poincare_only};
};

struct HeldoutCell {
  GeneratorKind generator = GeneratorKind::hyperbolic;
  DecoderKind decoder = DecoderKind::dual;
  std::uint64_t seed = 0;
  double mae = 0.0;
  bool failed = false;
  std::string error;
};

struct HeldoutSetting {
  GeneratorKind generator = GeneratorKind::hyperbolic;
  DecoderKind decoder = DecoderKind::dual;
  double mean_mae = 0.0;
  int wins = 0;
  int completed = 0;
};

struct HeldoutSummary {
  std::vector<HeldoutCell> cells;
  std::vector<HeldoutSetting> settings;
  std::size_t seed_count = 0;
  // Setting with the most wins for `generator` (ties: lower mean MAE).
  const HeldoutSetting& best(GeneratorKind generator) const;
  const HeldoutSetting& setting(GeneratorKind generator, DecoderKind decoder) const;
};

HeldoutSummary run_heldout_bench(const HeldoutSettings& settings);

}  // namespace rsd
