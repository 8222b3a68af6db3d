#include "rsd/pullback.hpp"

#include <algorithm>
#include <cmath>

#include "rsd/errors.hpp"

namespace rsd {

Matrix pseudo_inverse(const Matrix& m, double rcond) {
  if (!m.allFinite()) throw ContractViolation("pseudo_inverse: input must be finite");
  if (m.size() == 0) return Matrix(m.cols(), m.rows());
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericalError("pseudo_inverse: SVD did not converge");
  const Vector& sigma = svd.singularValues();
  const double cutoff = rcond * (sigma.size() > 0 ? sigma(0) : 0.0);
  Vector inv = Vector::Zero(sigma.size());
  for (Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) > cutoff && sigma(i) > 0.0) inv(i) = 1.0 / sigma(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Matrix project_out(const Matrix& memberships, const Matrix& m) {
  const Matrix gram_pinv = pseudo_inverse(memberships.transpose() * memberships);
  return m - memberships * (gram_pinv * (memberships.transpose() * m));
}

PullbackResult pullback_poles(const Matrix& coords, const Matrix& memberships) {
  if (memberships.rows() != coords.rows()) {
    throw ContractViolation("pullback: memberships and coordinates disagree on N");
  }
  PullbackResult out;
  const Matrix gram_pinv = pseudo_inverse(memberships.transpose() * memberships);
  out.poles = gram_pinv * (memberships.transpose() * coords);
  const Matrix projection = memberships * out.poles;
  out.residual = coords - projection;
  out.energy_x = coords.squaredNorm();
  out.energy_proj = projection.squaredNorm();
  out.energy_res = out.residual.squaredNorm();
  out.orthogonality_error = std::abs((projection.array() * out.residual.array()).sum());
  out.energy_gap = std::abs(out.energy_x - out.energy_proj - out.energy_res);
  return out;
}

PullbackResult pullback_poles(const Block& block, const MembershipMatrix& memberships) {
  return pullback_poles(block.coords(), memberships.values());
}

ReconstructionComparison compare_learned_vs_pullback(const Block& block,
                                                     const MembershipMatrix& memberships,
                                                     const PoleMatrix& learned_poles,
                                                     double epsilon) {
  const double scale = std::max(block.coords().norm(), epsilon);
  ReconstructionComparison out;
  out.learned = (block.coords() - reconstruct(memberships, learned_poles)).norm() / scale;
  out.pullback = pullback_poles(block, memberships).residual.norm() / scale;
  return out;
}

}  // namespace rsd
