#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rsd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Global numerical stabilizer used by the score transform, norm guards and
// loss denominators.
inline constexpr double kDefaultEpsilon = 1e-8;

// The audited coordinate block: N labelled items with D-dimensional vectors.
class Block {
 public:
  Block(std::vector<std::string> items, Matrix coords);

  const std::vector<std::string>& items() const { return items_; }
  const Matrix& coords() const { return coords_; }
  Index size() const { return coords_.rows(); }
  Index dim() const { return coords_.cols(); }

 private:
  std::vector<std::string> items_;
  Matrix coords_;
};

// Row-simplex memberships (N x K). Construction checks nonnegativity and unit
// row sums to 1e-12.
class MembershipMatrix {
 public:
  static constexpr double kRowSumTolerance = 1e-12;

  explicit MembershipMatrix(Matrix values);

  const Matrix& values() const { return values_; }
  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }
  double operator()(Index i, Index k) const { return values_(i, k); }

 private:
  Matrix values_;
};

// K x D coordinate poles.
using PoleMatrix = Matrix;

// Two-layer affine-tanh-affine map from D inputs to K logits.
struct EncoderParams {
  Matrix w1;  // H x D
  Vector b1;  // H
  Matrix w2;  // K x H
  Vector b2;  // K

  Index input_dim() const { return w1.cols(); }
  Index hidden_dim() const { return w1.rows(); }
  Index output_dim() const { return w2.rows(); }

  // Zero biases, Gaussian weights with standard deviation 1/sqrt(fan-in).
  static EncoderParams initialize(Index input_dim, Index hidden_dim, Index output_dim,
                                  std::mt19937_64& rng);

  // Returns N x K logits; `hidden` (N x H post-tanh) is filled when non-null.
  Matrix forward(const Matrix& inputs, Matrix* hidden = nullptr) const;
};

struct ResidualMatrix {
  Matrix values;         // N x D, X - S C
  Vector per_item_norm;  // Euclidean row norms
};

// Square score transform plus row normalization: s_ik = (l_ik^2 + eps) / sum_r (l_ir^2 + eps).
// Throws FitDivergence naming the first item with a non-finite logit.
MembershipMatrix memberships_from_logits(const Matrix& logits, double epsilon);

MembershipMatrix encode_memberships(const EncoderParams& params, const Block& block,
                                    double epsilon = kDefaultEpsilon);

Matrix reconstruct(const MembershipMatrix& memberships, const PoleMatrix& poles);

ResidualMatrix residual(const Block& block, const MembershipMatrix& memberships,
                        const PoleMatrix& poles);

// Fills `out` with i.i.d. N(0, stddev^2) draws in column-major order.
void fill_gaussian(Matrix& out, double stddev, std::mt19937_64& rng);

}  // namespace rsd
