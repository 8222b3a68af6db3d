#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rsd/block_model.hpp"
#include "rsd/ingestion.hpp"
#include "rsd/pullback.hpp"
#include "rsd/relation_decoder.hpp"
#include "rsd/trainer.hpp"

namespace rsd {

inline constexpr double kDefaultBudget = 0.05;
inline constexpr double kSmallMassThreshold = 0.02;

// ||X - S C||_F / max(||X||_F, eps)
double relative_reconstruction_error(const Block& block, const MembershipMatrix& s,
                                     const PoleMatrix& poles, double epsilon = kDefaultEpsilon);

// pi_k = mean_i s_ik
Vector component_mass(const MembershipMatrix& s);

// H_i = -sum_k s_ik ln s_ik, with 0 ln 0 = 0.
Vector assignment_entropy(const MembershipMatrix& s);

// Component order by descending mass; ties keep the original index order.
std::vector<Index> mass_order(const Vector& masses);

struct CanonicalFit {
  Matrix memberships;
  PoleMatrix poles;
  RelationHeads heads;
  RouterParams router;
  std::vector<Index> permutation;  // new component c is old component permutation[c]
};

// Relabels components by descending mass. Rows of C, V, U and the router's
// per-component input columns move with the membership columns, so S C and
// every decoder output are unchanged.
CanonicalFit mass_canonicalize(const MembershipMatrix& s, const PoleMatrix& poles,
                               const RelationHeads& heads, const RouterParams& router);

// Applies a component permutation to every K-indexed tensor of a model.
RsdModel permute_components(const RsdModel& model, std::span<const Index> permutation);

// Mean absolute error over the held-out unordered pairs, or over every
// off-diagonal entry when `held_out` is empty.
double proxy_mae(const ProxyMatrix& proxy, const Matrix& predicted, const PairList& held_out = {});

struct WitnessRecord {
  double eta_x = kDefaultBudget;
  double eta_a = kDefaultBudget;
  double loss_x = 0.0;
  double loss_a = 0.0;
  double coordinate_margin = 0.0;  // eta_x - loss_x
  double proxy_margin = 0.0;       // eta_a - loss_a
  bool coordinate_pass = false;
  bool proxy_pass = false;
  // True iff both budgets are met.
  bool witness = false;
};

WitnessRecord witness_report(double loss_x, double loss_a, double eta_x, double eta_a);

struct RankedItem {
  Index index = 0;
  std::string item;
  double norm = 0.0;
};

// Items by descending residual norm; equal norms keep index order.
std::vector<RankedItem> residual_ranking(const Block& block, const ResidualMatrix& r, Index top_n);

struct ReadoutWord {
  std::string word;
  double cosine = 0.0;
};

// Top-k vocabulary words by cosine similarity to `direction`. Tokens of
// `exclude_items` are skipped when the list is non-empty.
std::vector<ReadoutWord> neighbor_readout(const Vector& direction, const EmbeddingTable& vocab,
                                          Index k,
                                          std::span<const std::string> exclude_items = {});

struct Readout {
  std::string label;  // "c0", "c1", ..., "R+", "R-"
  std::vector<ReadoutWord> words;
};

// Readouts for each pole row and both signs of the mean learned residual.
std::vector<Readout> direction_readouts(const PoleMatrix& poles, const Matrix& residual,
                                        const EmbeddingTable& vocab, Index k,
                                        std::span<const std::string> exclude_items);

struct PullbackSummary {
  double rho_learned = 0.0;
  double rho_pullback = 0.0;
  double energy_x = 0.0;
  double energy_proj = 0.0;
  double energy_res = 0.0;
  double orthogonality_error = 0.0;
  double energy_gap = 0.0;
};

// Diagnostics for one completed fit, in mass-canonical component order.
struct AuditReport {
  std::string block_name;
  std::string proxy_source;
  std::vector<std::string> items;
  Index n = 0;
  Index k = 0;
  Index d = 0;
  DecoderKind decoder = DecoderKind::dual;
  Objective objective;
  double rho_x = 0.0;
  double proxy_loss = 0.0;
  double proxy_mae = 0.0;
  bool proxy_mae_held_out = false;
  double mix_weight = 0.0;
  Vector component_masses;
  std::vector<Index> small_mass_components;
  std::vector<Index> dominant_component;  // argmax_k s_ik per item
  Vector entropy;
  Vector residual_norms;
  std::vector<RankedItem> residual_ranking;
  WitnessRecord witness;
  PullbackSummary pullback;
  std::vector<Index> permutation;
  std::vector<std::string> warnings;
  PairList masked_pairs;

  Matrix coords;
  Matrix proxy;
  Matrix memberships;
  PoleMatrix poles;
  Matrix predicted;
  Matrix gate;
};

AuditReport build_audit_report(const std::string& block_name, const Block& block,
                               const ProxyMatrix& proxy, const FitTrace& trace, double eta_x,
                               double eta_a, const PairList& masked_pairs = {});

}  // namespace rsd
