#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rsd/errors.hpp"
#include "rsd/fixtures.hpp"
#include "rsd/trainer.hpp"

using namespace rsd;
using rsd_test::gaussian;
using rsd_test::labels;

namespace {

double max_abs(RsdModel& m, std::size_t first_tensor) {
  double out = 0.0;
  auto tensors = m.tensors();
  for (std::size_t t = first_tensor; t < tensors.size(); ++t)
    for (double v : tensors[t]) out = std::max(out, std::abs(v));
  return out;
}

}  // namespace

TEST_CASE("proxy loss on a two-item block with zero prediction") {
  const double a = 0.6;
  Matrix m = Matrix::Zero(2, 2);
  m(0, 1) = m(1, 0) = a;
  const ProxyMatrix proxy(m, "t");
  const double expected = (2.0 * a * a / 4.0) / (a * std::sqrt(2.0));
  CHECK(loss_a(proxy, Matrix::Zero(2, 2)) == doctest::Approx(expected).epsilon(1e-15));
  CHECK_THROWS_AS(loss_a(proxy, Matrix::Zero(2, 2), kDefaultEpsilon, {{0, 1}}), DegenerateObjective);
}

TEST_CASE("masked pairs leave both the numerator and the count") {
  const Matrix a = rsd_test::random_proxy(3, 4);
  const ProxyMatrix proxy(a, "t");
  Matrix pred = rsd_test::random_proxy(3, 5);
  double sum = 0.0;
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) {
      if ((i == 0 && j == 2) || (i == 2 && j == 0)) continue;
      sum += (a(i, j) - pred(i, j)) * (a(i, j) - pred(i, j));
    }
  const double expected = sum / 7.0 / a.norm();
  CHECK(loss_a(proxy, pred, kDefaultEpsilon, {{0, 2}}) == doctest::Approx(expected).epsilon(1e-14));
  // Masked entries cannot influence the loss.
  pred(0, 2) = pred(2, 0) = 0.99;
  CHECK(loss_a(proxy, pred, kDefaultEpsilon, {{0, 2}}) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("coordinate loss matches a scalar loop") {
  const Block block(labels(5), gaussian(5, 3, 1));
  const MembershipMatrix s(rsd_test::random_simplex(5, 2, 2));
  const Matrix c = gaussian(2, 3, 3);
  double sum = 0.0, fro = 0.0;
  for (Index i = 0; i < 5; ++i)
    for (Index d = 0; d < 3; ++d) {
      double rec = 0.0;
      for (Index k = 0; k < 2; ++k) rec += s(i, k) * c(k, d);
      sum += std::pow(block.coords()(i, d) - rec, 2);
      fro += std::pow(block.coords()(i, d), 2);
    }
  CHECK(loss_x(block, s, c) == doctest::Approx(sum / 15.0 / std::sqrt(fro)).epsilon(1e-14));
  const MembershipMatrix exact(rsd_test::random_simplex(5, 2, 7));
  const Block planted(labels(5), exact.values() * c);
  CHECK(loss_x(planted, exact, c) < 1e-30);
}

TEST_CASE("analytic gradients agree with central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Index n = 5 + static_cast<Index>(seed % 4);
    const Index d = 3 + static_cast<Index>(seed % 4);
    const Block block(labels(n), gaussian(n, d, 100 + seed));
    const ProxyMatrix proxy(rsd_test::random_proxy(n, 200 + seed), "t");
    Hyperparams hp;
    hp.encoder_hidden = 6;
    hp.head_dim = 3;
    hp.router_hidden = 4;
    CHECK(gradient_check(block, proxy, hp, seed) < 1e-4);
  }
}

TEST_CASE("gradients hold for the ablations and with a mask") {
  const Block block(labels(6), gaussian(6, 4, 9));
  const ProxyMatrix proxy(rsd_test::random_proxy(6, 10), "t");
  for (DecoderKind kind : {DecoderKind::dot_only, DecoderKind::poincare_only}) {
    Hyperparams hp;
    hp.encoder_hidden = 5;
    hp.decoder = kind;
    CHECK(gradient_check(block, proxy, hp, 3) < 1e-4);
  }
  Hyperparams hp;
  hp.encoder_hidden = 5;
  const RsdModel model = RsdModel::initialize(hp, 4, 11);
  CHECK(gradient_check_detail(model, block, proxy, 0.7, {{0, 1}, {2, 5}}).max_relative_error < 1e-4);
}

TEST_CASE("gradient check refuses large instances") {
  const Block block(labels(9), gaussian(9, 3, 1));
  const ProxyMatrix proxy(rsd_test::random_proxy(9, 2), "t");
  CHECK_THROWS_AS(gradient_check(block, proxy, Hyperparams{}, 0), ContractViolation);
}

TEST_CASE("zero relation weight gives zero decoder gradients") {
  const Block block(labels(6), gaussian(6, 4, 12));
  const ProxyMatrix proxy(rsd_test::random_proxy(6, 13), "t");
  const RsdModel model = RsdModel::initialize(Hyperparams{}, 4, 14);
  RsdModel grad = model.zeros_like();
  const Objective obj = objective_gradient(model, block, proxy, 0.0, {}, grad);
  CHECK(obj.total == obj.loss_x);
  CHECK(max_abs(grad, 5) == 0.0);  // heads and router follow encoder and poles
  CHECK(max_abs(grad, 0) > 0.0);
}

TEST_CASE("objective gradient reports the evaluated objective") {
  const Block block(labels(6), gaussian(6, 4, 15));
  const ProxyMatrix proxy(rsd_test::random_proxy(6, 16), "t");
  const RsdModel model = RsdModel::initialize(Hyperparams{}, 4, 17);
  RsdModel grad = model.zeros_like();
  const Objective a = objective_gradient(model, block, proxy, 1.0, {}, grad);
  const Objective b = evaluate_model(model, block, proxy, 1.0).objective;
  CHECK(a.total == doctest::Approx(b.total).epsilon(1e-13));
  CHECK(b.total == doctest::Approx(b.loss_x + b.loss_a).epsilon(1e-15));
}

TEST_CASE("training is deterministic and reduces the objective") {
  SyntheticSpec spec;
  spec.n = 10;
  spec.d = 6;
  spec.seed = 3;
  const SyntheticFixture fx = generate_synthetic(spec);
  TrainConfig cfg;
  cfg.steps = 150;
  cfg.learning_rate = 0.02;
  cfg.seed = 5;
  const FitTrace a = train(fx.block, fx.proxy, cfg, Hyperparams{});
  const FitTrace b = train(fx.block, fx.proxy, cfg, Hyperparams{});
  CHECK(a.final_objective.total == b.final_objective.total);
  CHECK(a.memberships == b.memberships);
  CHECK(a.history.size() == 150);
  CHECK(a.final_objective.total < 0.5 * a.history.front().total);
  cfg.seed = 6;
  const FitTrace c = train(fx.block, fx.proxy, cfg, Hyperparams{});
  CHECK(c.memberships != a.memberships);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  cfg = TrainConfig{};
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
}

TEST_CASE("model layout") {
  Hyperparams hp;
  RsdModel m = RsdModel::initialize(hp, 16, 0);
  // encoder 32*16+32+2*32+2, poles 2*16, heads 2*8*2, router 16*6+16+2*16+2
  CHECK(m.parameter_count() == 610 + 32 + 32 + 146);
  CHECK(m.tensors().size() == 11);
  CHECK(m.heads.head_dim() == 8);
}
