#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rsd/errors.hpp"

using namespace rsd;
using rsd_test::gaussian;

namespace {

RelationHeads random_heads(Index k, Index m, std::uint64_t seed) {
  RelationHeads h;
  h.dot = gaussian(k, m, seed);
  h.poincare = gaussian(k, m, seed + 100, 0.7);
  return h;
}

RouterParams random_router(Index k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RouterParams r = RouterParams::initialize(k, 16, rng);
  r.b1 = gaussian(16, 1, seed + 1, 0.3);
  r.b2 = gaussian(2, 1, seed + 2, 0.3);
  return r;
}

// Scalar reference for the hyperbolic head.
double reference_hyperbolic(const Matrix& s, const Matrix& u, Index i, Index j, double tau,
                            double margin) {
  auto ball = [&](Index row) {
    std::vector<double> z(static_cast<std::size_t>(u.cols()), 0.0);
    for (Index d = 0; d < u.cols(); ++d)
      for (Index k = 0; k < u.rows(); ++k) z[static_cast<std::size_t>(d)] += s(row, k) * u(k, d);
    double n = 0.0;
    for (double v : z) n += v * v;
    n = std::sqrt(n);
    const double scale = (1.0 - margin) * std::tanh(n) / std::max(n, 1e-8);
    for (double& v : z) v *= scale;
    return z;
  };
  const auto a = ball(i), b = ball(j);
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    diff += (a[d] - b[d]) * (a[d] - b[d]);
    na += a[d] * a[d];
    nb += b[d] * b[d];
  }
  const double dist = std::acosh(1.0 + 2.0 * diff / ((1.0 - na) * (1.0 - nb)));
  return std::exp(-dist * dist / tau);
}

}  // namespace

TEST_CASE("poincare distance from the origin to radius one half is ln 3") {
  Vector origin = Vector::Zero(3);
  Vector p = Vector::Zero(3);
  p(0) = 0.5;
  CHECK(poincare_distance(origin, p) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  CHECK(poincare_distance(p, p) == 0.0);
  Vector q = Vector::Zero(3);
  q(1) = -0.3;
  CHECK(poincare_distance(p, q) == doctest::Approx(poincare_distance(q, p)).epsilon(1e-15));
}

TEST_CASE("arcosh1p matches acosh away from zero and stays accurate near it") {
  for (double u : {1e-3, 0.1, 1.0, 10.0, 1e4}) CHECK(arcosh1p(u) == doctest::Approx(std::acosh(1.0 + u)).epsilon(1e-13));
  const double tiny = 1e-20;
  CHECK(arcosh1p(tiny) == doctest::Approx(std::sqrt(2.0 * tiny)).epsilon(1e-12));
  CHECK(arcosh1p(0.0) == 0.0);
}

TEST_CASE("projection stays inside the ball") {
  Matrix z = gaussian(10, 4, 3, 50.0);
  z.row(0).setZero();
  const Matrix y = project_to_ball(z, 1e-3, kDefaultEpsilon);
  for (Index i = 0; i < y.rows(); ++i) CHECK(y.row(i).norm() < 1.0 - 1e-3 + 1e-15);
  CHECK(y.row(0).isZero());
}

TEST_CASE("dot head matches a scalar loop") {
  const MembershipMatrix s(rsd_test::random_simplex(6, 3, 1));
  RelationHeads h = random_heads(3, 8, 2);
  h.temperature = 0.7;
  const Matrix a = dot_head(s, h);
  for (Index i = 0; i < 6; ++i) {
    for (Index j = 0; j < 6; ++j) {
      double logit = 0.0;
      for (Index d = 0; d < 8; ++d) {
        double qi = 0.0, qj = 0.0;
        for (Index k = 0; k < 3; ++k) {
          qi += s(i, k) * h.dot(k, d);
          qj += s(j, k) * h.dot(k, d);
        }
        logit += qi * qj;
      }
      const double expected = i == j ? 0.0 : 1.0 / (1.0 + std::exp(-logit / (std::sqrt(8.0) * 0.7)));
      CHECK(a(i, j) == doctest::Approx(expected).epsilon(1e-13));
    }
  }
}

TEST_CASE("hyperbolic head matches a scalar reference") {
  const MembershipMatrix s(rsd_test::random_simplex(5, 2, 11));
  RelationHeads h = random_heads(2, 4, 12);
  h.temperature = 1.3;
  const Matrix a = poincare_head(s, h);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j) {
      const double expected = i == j ? 0.0 : reference_hyperbolic(s.values(), h.poincare, i, j, 1.3, 1e-3);
      CHECK(a(i, j) == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("router gate is symmetric with zero diagonal and values in (0, 1)") {
  const MembershipMatrix s(rsd_test::random_simplex(7, 3, 5));
  const Matrix g = router_gate(s, random_router(3, 6));
  CHECK((g - g.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.diagonal().isZero());
  for (Index i = 0; i < 7; ++i)
    for (Index j = 0; j < 7; ++j)
      if (i != j) CHECK((g(i, j) > 0.0 && g(i, j) < 1.0));
}

TEST_CASE("router probability is softmax over two logits") {
  const RouterParams r = random_router(2, 9);
  const Vector phi = pair_features(Vector::Constant(2, 0.5), Vector::Constant(2, 0.5));
  CHECK(phi.size() == 6);
  const Vector h = (r.w1 * phi + r.b1).array().tanh().matrix();
  const Vector o = r.w2 * h + r.b2;
  const double expected = std::exp(o(0)) / (std::exp(o(0)) + std::exp(o(1)));
  CHECK(router_probability(r, phi) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("ablations fix the gate") {
  const MembershipMatrix s(rsd_test::random_simplex(6, 2, 3));
  const RelationHeads h = random_heads(2, 8, 4);
  const RouterParams r = random_router(2, 5);
  const DecodedProxy dot = decode_proxy_parts(s, h, r, DecoderKind::dot_only);
  const DecodedProxy hyp = decode_proxy_parts(s, h, r, DecoderKind::poincare_only);
  CHECK((dot.combined - dot_head(s, h)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((hyp.combined - poincare_head(s, h)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(relation_mix_weight(dot.gate) == 1.0);
  CHECK(relation_mix_weight(hyp.gate) == 0.0);
  const DecodedProxy dual = decode_proxy_parts(s, h, r, DecoderKind::dual);
  const Matrix expected = dual.gate.cwiseProduct(dual.dot) +
                          (Matrix::Ones(6, 6) - dual.gate).cwiseProduct(dual.hyperbolic);
  CHECK((dual.combined - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(dual.combined.diagonal().isZero());
  CHECK(dual.combined.minCoeff() >= 0.0);
  CHECK(dual.combined.maxCoeff() <= 1.0);
}

TEST_CASE("decoder output is invariant to a joint label swap") {
  const Index k = 3;
  const Matrix s_values = rsd_test::random_simplex(8, k, 31);
  const RelationHeads h = random_heads(k, 8, 32);
  const RouterParams r = random_router(k, 33);
  const std::vector<Index> perm{2, 0, 1};  // new column c holds old column perm[c]
  Matrix sp(8, k);
  RelationHeads hp = h;
  RouterParams rp = r;
  for (Index c = 0; c < k; ++c) {
    sp.col(c) = s_values.col(perm[c]);
    hp.dot.row(c) = h.dot.row(perm[c]);
    hp.poincare.row(c) = h.poincare.row(perm[c]);
    for (Index block = 0; block < 3; ++block) rp.w1.col(block * k + c) = r.w1.col(block * k + perm[c]);
  }
  const Matrix a = decode_proxy(MembershipMatrix(s_values), h, r);
  const Matrix b = decode_proxy(MembershipMatrix(sp), hp, rp);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("proxy matrix invariants") {
  Matrix a = rsd_test::random_proxy(4, 1);
  CHECK_NOTHROW(ProxyMatrix(a, "test"));
  Matrix asym = a;
  asym(0, 1) += 0.1;
  CHECK_THROWS_AS(ProxyMatrix(asym, "test"), ContractViolation);
  Matrix diag = a;
  diag(2, 2) = 0.5;
  CHECK_THROWS_AS(ProxyMatrix(diag, "test"), ContractViolation);
  Matrix big = a;
  big(0, 3) = big(3, 0) = 1.5;
  CHECK_THROWS_AS(ProxyMatrix(big, "test"), ContractViolation);
  CHECK_THROWS_AS(ProxyMatrix(Matrix::Zero(1, 1), "test"), ContractViolation);
  Matrix nearly = a;
  nearly(0, 1) += 1e-14;
  const ProxyMatrix p(nearly, "test");
  CHECK(p.values()(0, 1) == p.values()(1, 0));
}

TEST_CASE("decoder kind parsing") {
  CHECK(parse_decoder_kind("dual") == DecoderKind::dual);
  CHECK(parse_decoder_kind("dot") == DecoderKind::dot_only);
  CHECK(parse_decoder_kind("poincare-only") == DecoderKind::poincare_only);
  CHECK(to_string(DecoderKind::poincare_only) == "poincare");
  CHECK_THROWS(parse_decoder_kind("linear"));
}
