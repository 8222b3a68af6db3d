#pragma once

#include <random>
#include <string>
#include <vector>

#include "rsd/block_model.hpp"
#include "rsd/relation_decoder.hpp"

namespace rsd_test {

using rsd::Index;
using rsd::Matrix;

inline std::vector<std::string> labels(Index n) {
  std::vector<std::string> out;
  for (Index i = 0; i < n; ++i) out.push_back("x" + std::to_string(i));
  return out;
}

inline Matrix gaussian(Index rows, Index cols, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  Matrix m(rows, cols);
  rsd::fill_gaussian(m, sd, rng);
  return m;
}

inline Matrix random_simplex(Index n, Index k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix s(n, k);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < k; ++c) s(i, c) = u(rng);
    s.row(i) /= s.row(i).sum();
  }
  return s;
}

inline Matrix random_proxy(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) a(i, j) = a(j, i) = u(rng);
  return a;
}

}  // namespace rsd_test
