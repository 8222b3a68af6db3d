#include "rsd/block_model.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

#include "rsd/errors.hpp"

namespace rsd {

Block::Block(std::vector<std::string> items, Matrix coords)
    : items_(std::move(items)), coords_(std::move(coords)) {
  if (coords_.rows() < 2) throw ContractViolation("block needs at least 2 items");
  if (coords_.cols() < 1) throw ContractViolation("block needs at least 1 dimension");
  if (static_cast<Index>(items_.size()) != coords_.rows()) {
    throw ContractViolation("block has " + std::to_string(items_.size()) + " labels for " +
                            std::to_string(coords_.rows()) + " rows");
  }
  if (!coords_.allFinite()) throw ContractViolation("block coordinates must be finite");
  std::unordered_set<std::string> seen;
  for (const auto& item : items_) {
    if (!seen.insert(item).second) throw ContractViolation("duplicate block label: " + item);
  }
}

MembershipMatrix::MembershipMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.cols() < 2) throw ContractViolation("membership matrix needs K >= 2");
  if (values_.rows() < 1) throw ContractViolation("membership matrix has no rows");
  for (Index i = 0; i < values_.rows(); ++i) {
    double sum = 0.0;
    for (Index k = 0; k < values_.cols(); ++k) {
      const double v = values_(i, k);
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ContractViolation("membership row " + std::to_string(i) +
                                " has a negative or non-finite entry");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw ContractViolation("membership row " + std::to_string(i) + " does not sum to 1");
    }
  }
}

void fill_gaussian(Matrix& out, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  for (Index c = 0; c < out.cols(); ++c)
    for (Index r = 0; r < out.rows(); ++r) out(r, c) = normal(rng);
}

EncoderParams EncoderParams::initialize(Index input_dim, Index hidden_dim, Index output_dim,
                                        std::mt19937_64& rng) {
  EncoderParams p;
  p.w1.resize(hidden_dim, input_dim);
  p.w2.resize(output_dim, hidden_dim);
  fill_gaussian(p.w1, 1.0 / std::sqrt(static_cast<double>(input_dim)), rng);
  fill_gaussian(p.w2, 1.0 / std::sqrt(static_cast<double>(hidden_dim)), rng);
  p.b1 = Vector::Zero(hidden_dim);
  p.b2 = Vector::Zero(output_dim);
  return p;
}

Matrix EncoderParams::forward(const Matrix& inputs, Matrix* hidden) const {
  if (inputs.cols() != input_dim()) {
    throw ContractViolation("encoder expects " + std::to_string(input_dim()) + " inputs, got " +
                            std::to_string(inputs.cols()));
  }
  Matrix h = ((inputs * w1.transpose()).rowwise() + b1.transpose()).array().tanh().matrix();
  Matrix logits = (h * w2.transpose()).rowwise() + b2.transpose();
  if (hidden) *hidden = std::move(h);
  return logits;
}

MembershipMatrix memberships_from_logits(const Matrix& logits, double epsilon) {
  if (!(epsilon > 0.0)) throw ContractViolation("epsilon must be positive");
  Matrix s(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    if (!logits.row(i).allFinite()) {
      throw FitDivergence("non-finite encoder output at item " + std::to_string(i), i);
    }
    double total = 0.0;
    for (Index k = 0; k < logits.cols(); ++k) {
      s(i, k) = logits(i, k) * logits(i, k) + epsilon;
      total += s(i, k);
    }
    if (!std::isfinite(total)) {
      throw FitDivergence("score overflow at item " + std::to_string(i), i);
    }
    s.row(i) /= total;
  }
  return MembershipMatrix(std::move(s));
}

MembershipMatrix encode_memberships(const EncoderParams& params, const Block& block,
                                    double epsilon) {
  return memberships_from_logits(params.forward(block.coords()), epsilon);
}

Matrix reconstruct(const MembershipMatrix& memberships, const PoleMatrix& poles) {
  if (memberships.cols() != poles.rows()) {
    throw ContractViolation("membership columns (" + std::to_string(memberships.cols()) +
                            ") do not match pole rows (" + std::to_string(poles.rows()) + ")");
  }
  return memberships.values() * poles;
}

ResidualMatrix residual(const Block& block, const MembershipMatrix& memberships,
                        const PoleMatrix& poles) {
  if (memberships.rows() != block.size() || poles.cols() != block.dim()) {
    throw ContractViolation("residual shapes disagree with the block");
  }
  ResidualMatrix r;
  r.values = block.coords() - reconstruct(memberships, poles);
  r.per_item_norm = r.values.rowwise().norm();
  return r;
}

}  // namespace rsd
