#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rsd/errors.hpp"

using namespace rsd;
using rsd_test::gaussian;
using rsd_test::labels;

TEST_CASE("memberships from logits (2, 1) are (0.8, 0.2)") {
  Matrix logits(1, 2);
  logits << 2.0, 1.0;
  const MembershipMatrix s = memberships_from_logits(logits, kDefaultEpsilon);
  CHECK(s(0, 0) == doctest::Approx(0.8).epsilon(1e-8));
  CHECK(s(0, 1) == doctest::Approx(0.2).epsilon(1e-8));
  CHECK_THROWS_AS(memberships_from_logits(logits, 0.0), ContractViolation);
}

TEST_CASE("membership rows lie on the simplex") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix logits = gaussian(15, 4, seed, 3.0);
    const MembershipMatrix s = memberships_from_logits(logits, kDefaultEpsilon);
    for (Index i = 0; i < s.rows(); ++i) {
      CHECK(std::abs(s.values().row(i).sum() - 1.0) < 1e-12);
      CHECK(s.values().row(i).minCoeff() > 0.0);
    }
  }
}

TEST_CASE("all-zero logits give uniform memberships") {
  const MembershipMatrix s = memberships_from_logits(Matrix::Zero(3, 4), kDefaultEpsilon);
  CHECK((s.values().array() - 0.25).abs().maxCoeff() < 1e-15);
}

TEST_CASE("non-finite logits name the item") {
  Matrix logits = Matrix::Ones(3, 2);
  logits(2, 1) = std::nan("");
  try {
    (void)memberships_from_logits(logits, kDefaultEpsilon);
    FAIL("expected divergence");
  } catch (const FitDivergence& e) {
    CHECK(e.index() == 2);
  }
}

TEST_CASE("membership matrix invariants") {
  Matrix bad(2, 2);
  bad << 0.5, 0.5, 0.7, 0.2;
  CHECK_THROWS_AS(MembershipMatrix{bad}, ContractViolation);
  bad << 1.2, -0.2, 0.5, 0.5;
  CHECK_THROWS_AS(MembershipMatrix{bad}, ContractViolation);
  CHECK_THROWS_AS(MembershipMatrix{Matrix::Ones(3, 1)}, ContractViolation);
}

TEST_CASE("block validation") {
  CHECK_THROWS_AS(Block(labels(1), Matrix::Ones(1, 3)), ContractViolation);
  CHECK_THROWS_AS(Block(labels(3), Matrix::Ones(2, 3)), ContractViolation);
  CHECK_THROWS_AS(Block({"a", "a"}, Matrix::Ones(2, 3)), ContractViolation);
  Matrix x = Matrix::Ones(2, 3);
  x(1, 1) = INFINITY;
  CHECK_THROWS_AS(Block(labels(2), x), ContractViolation);
}

TEST_CASE("reconstruction matches a triple loop") {
  const Matrix s_values = rsd_test::random_simplex(7, 3, 4);
  const Matrix c = gaussian(3, 5, 5);
  const MembershipMatrix s(s_values);
  const Matrix out = reconstruct(s, c);
  for (Index i = 0; i < 7; ++i) {
    for (Index d = 0; d < 5; ++d) {
      double acc = 0.0;
      for (Index k = 0; k < 3; ++k) acc += s_values(i, k) * c(k, d);
      CHECK(std::abs(out(i, d) - acc) < 1e-14);
    }
  }
  CHECK_THROWS_AS(reconstruct(s, gaussian(2, 5, 1)), ContractViolation);
}

TEST_CASE("residual and its row norms") {
  const Block block(labels(6), gaussian(6, 4, 8));
  const MembershipMatrix s(rsd_test::random_simplex(6, 2, 9));
  const Matrix c = gaussian(2, 4, 10);
  const ResidualMatrix r = residual(block, s, c);
  CHECK((r.values - (block.coords() - s.values() * c)).cwiseAbs().maxCoeff() == 0.0);
  for (Index i = 0; i < 6; ++i) CHECK(r.per_item_norm(i) == doctest::Approx(r.values.row(i).norm()));
}

TEST_CASE("label swap leaves S C and R unchanged") {
  const Block block(labels(9), gaussian(9, 5, 21));
  const Matrix s_values = rsd_test::random_simplex(9, 3, 22);
  const Matrix c = gaussian(3, 5, 23);
  const Eigen::PermutationMatrix<Eigen::Dynamic> p(Eigen::Vector3i(2, 0, 1));
  const MembershipMatrix s(s_values);
  const MembershipMatrix sp(s_values * p);
  const Matrix cp = p.transpose() * c;
  CHECK((reconstruct(s, c) - reconstruct(sp, cp)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((residual(block, s, c).values - residual(block, sp, cp).values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encoder initialization is seeded") {
  std::mt19937_64 a(3), b(3);
  const EncoderParams pa = EncoderParams::initialize(5, 32, 2, a);
  const EncoderParams pb = EncoderParams::initialize(5, 32, 2, b);
  CHECK(pa.w1 == pb.w1);
  CHECK(pa.w2 == pb.w2);
  CHECK(pa.b1.isZero());
  CHECK(pa.b2.isZero());
  const Block block(labels(4), gaussian(4, 5, 1));
  const MembershipMatrix s = encode_memberships(pa, block);
  CHECK(s.rows() == 4);
  CHECK(s.cols() == 2);
}
