#pragma once

#include "rsd/block_model.hpp"

namespace rsd {

inline constexpr double kDefaultRcond = 1e-12;

// Moore-Penrose pseudoinverse through a thin SVD; singular values below
// rcond * sigma_max are treated as zero.
Matrix pseudo_inverse(const Matrix& m, double rcond = kDefaultRcond);

// Fixed-S least-squares pullback readout.
struct PullbackResult {
  PoleMatrix poles;  // C* = (S^T S)^+ S^T X
  Matrix residual;   // R* = X - S C*
  double energy_x = 0.0;
  double energy_proj = 0.0;
  double energy_res = 0.0;
  double orthogonality_error = 0.0;  // |<S C*, R*>_F|
  double energy_gap = 0.0;           // |energy_x - energy_proj - energy_res|
};

PullbackResult pullback_poles(const Matrix& coords, const Matrix& memberships);
PullbackResult pullback_poles(const Block& block, const MembershipMatrix& memberships);

// Applies (I - P_S) to `m` without forming the N x N projector.
Matrix project_out(const Matrix& memberships, const Matrix& m);

struct ReconstructionComparison {
  double learned = 0.0;   // rho_X with the jointly learned poles
  double pullback = 0.0;  // rho_X with C*
};

ReconstructionComparison compare_learned_vs_pullback(const Block& block,
                                                     const MembershipMatrix& memberships,
                                                     const PoleMatrix& learned_poles,
                                                     double epsilon = kDefaultEpsilon);

}  // namespace rsd
