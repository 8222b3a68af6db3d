#include "rsd/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>

#include "rsd/diagnostics.hpp"
#include "rsd/errors.hpp"
#include "rsd/pullback.hpp"

namespace rsd {

namespace {

enum Stream : std::uint64_t {
  kStreamMemberships = 1,
  kStreamPoles = 2,
  kStreamNoise = 3,
  kStreamHeads = 4,
  kStreamProxyMemberships = 5,
  kStreamInjection = 6,
};

std::vector<std::string> numbered_items(Index n) {
  std::vector<std::string> items;
  for (Index i = 0; i < n; ++i) {
    std::string label = std::to_string(i);
    if (label.size() < 2) label.insert(0, "0");
    items.push_back("item_" + label);
  }
  return items;
}

Matrix clip_proxy(Matrix a) {
  a = a.cwiseMax(0.0).cwiseMin(1.0);
  a = 0.5 * (a + a.transpose()).eval();
  a.diagonal().setZero();
  return a;
}

}  // namespace

std::string_view to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::same_geometry: return "same-geometry";
    case GeneratorKind::misaligned: return "misaligned";
    case GeneratorKind::residual_injection: return "residual-injection";
    case GeneratorKind::hyperbolic: return "hyperbolic";
    case GeneratorKind::mixed: return "mixed";
    case GeneratorKind::scaled_dot: return "scaled-dot";
  }
  return "same-geometry";
}

void SyntheticSpec::validate() const {
  if (n < 2 || k < 2 || d < 1) throw ContractViolation("synthetic spec needs N >= 2, K >= 2, D >= 1");
  if (static_cast<Index>(dirichlet_alpha.size()) != k) {
    throw ContractViolation("dirichlet alpha must have K entries");
  }
  for (double a : dirichlet_alpha) {
    if (!(a > 0.0)) throw ContractViolation("dirichlet alpha entries must be positive");
  }
  if (!(coord_noise_std >= 0.0)) throw ContractViolation("noise std must be nonnegative");
  if (!(gamma >= 0.0)) throw ContractViolation("gamma must be nonnegative");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Matrix sample_dirichlet(Index n, const std::vector<double>& alpha, std::mt19937_64& rng) {
  const Index k = static_cast<Index>(alpha.size());
  Matrix s(n, k);
  for (Index i = 0; i < n; ++i) {
    double total = 0.0;
    do {
      total = 0.0;
      for (Index c = 0; c < k; ++c) {
        std::gamma_distribution<double> gamma(alpha[static_cast<std::size_t>(c)], 1.0);
        s(i, c) = gamma(rng);
        total += s(i, c);
      }
    } while (!(total > 0.0));
    s.row(i) /= total;
  }
  return s;
}

SyntheticFixture generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 membership_rng(derive_seed(spec.seed, kStreamMemberships));
  std::mt19937_64 pole_rng(derive_seed(spec.seed, kStreamPoles));
  std::mt19937_64 noise_rng(derive_seed(spec.seed, kStreamNoise));
  std::mt19937_64 head_rng(derive_seed(spec.seed, kStreamHeads));
  std::mt19937_64 proxy_rng(derive_seed(spec.seed, kStreamProxyMemberships));

  MembershipMatrix s(sample_dirichlet(spec.n, spec.dirichlet_alpha, membership_rng));
  PoleMatrix c(spec.k, spec.d);
  fill_gaussian(c, 1.0, pole_rng);
  Matrix x = s.values() * c;
  if (spec.coord_noise_std > 0.0) {
    Matrix noise(spec.n, spec.d);
    fill_gaussian(noise, spec.coord_noise_std, noise_rng);
    x += noise;
  }

  RelationHeads heads;
  heads.dot.resize(spec.k, spec.head_dim);
  heads.poincare.resize(spec.k, spec.head_dim);
  fill_gaussian(heads.dot, spec.dot_head_scale, head_rng);
  fill_gaussian(heads.poincare, spec.poincare_head_scale, head_rng);
  // Cross-component affinity is kept low so the proxy carries contrast.
  for (Index r = 1; r < spec.k; ++r) {
    if ((heads.dot.topRows(r) * heads.dot.row(r).transpose()).sum() > 0.0) heads.dot.row(r) *= -1.0;
  }
  heads.temperature = spec.temperature;
  heads.ball_margin = spec.ball_margin;

  MembershipMatrix proxy_s = s;
  if (spec.kind == GeneratorKind::misaligned) {
    proxy_s = MembershipMatrix(sample_dirichlet(spec.n, spec.dirichlet_alpha, proxy_rng));
  }

  Matrix a;
  switch (spec.kind) {
    case GeneratorKind::same_geometry:
    case GeneratorKind::misaligned:
    case GeneratorKind::residual_injection:
    case GeneratorKind::scaled_dot:
      a = dot_head(proxy_s, heads);
      break;
    case GeneratorKind::hyperbolic:
      a = poincare_head(proxy_s, heads);
      break;
    case GeneratorKind::mixed:
      a = 0.5 * dot_head(proxy_s, heads) + 0.5 * poincare_head(proxy_s, heads);
      break;
  }

  Block block(numbered_items(spec.n), std::move(x));
  if (spec.kind == GeneratorKind::residual_injection && spec.gamma > 0.0) {
    block = inject_orthogonal_residual(block, s, spec.gamma, derive_seed(spec.seed, kStreamInjection));
  }
  return SyntheticFixture{std::move(block),
                          ProxyMatrix(clip_proxy(std::move(a)),
                                      "synthetic-" + std::string(to_string(spec.kind))),
                          std::move(s), std::move(c), std::move(heads), std::move(proxy_s)};
}

Block inject_orthogonal_residual(const Block& block, const MembershipMatrix& s, double gamma,
                                 std::uint64_t seed) {
  if (!(gamma >= 0.0)) throw ContractViolation("gamma must be nonnegative");
  if (s.rows() != block.size()) throw ContractViolation("memberships do not match the block");
  if (gamma == 0.0) return block;

  std::mt19937_64 rng(seed);
  Matrix g(block.size(), block.dim());
  fill_gaussian(g, 1.0, rng);
  Matrix direction = project_out(s.values(), g);
  // Remove the overlap with the existing pullback residual so the energy
  // cross term vanishes.
  const Matrix base_residual = project_out(s.values(), block.coords());
  const double base_energy = base_residual.squaredNorm();
  if (base_energy > 0.0) {
    direction -= ((direction.array() * base_residual.array()).sum() / base_energy) * base_residual;
    direction = project_out(s.values(), direction);
  }
  const double norm = direction.norm();
  if (!(norm > 1e-12 * std::max(1.0, g.norm()))) {
    throw DegenerateFixture("orthogonal injection direction is numerically zero");
  }
  return Block(block.items(), block.coords() + (gamma / norm) * direction);
}

HoldoutMask make_holdout_mask(Index n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ContractViolation("holdout fraction must lie in (0, 1)");
  if (n < 2) throw ContractViolation("holdout mask needs N >= 2");
  const Index total = n * (n - 1) / 2;
  const auto count =
      static_cast<Index>(std::floor(fraction * static_cast<double>(total) + 1e-9));
  if (count <= 0) throw ContractViolation("holdout mask would hide no pairs");
  if (count >= total) throw ContractViolation("holdout mask would hide every pair");

  PairList all;
  all.reserve(static_cast<std::size_t>(total));
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) all.emplace_back(i, j);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates with explicit index draws.
  for (Index t = 0; t < count; ++t) {
    std::uniform_int_distribution<Index> pick(t, total - 1);
    std::swap(all[static_cast<std::size_t>(t)], all[static_cast<std::size_t>(pick(rng))]);
  }
  HoldoutMask mask;
  mask.pairs.assign(all.begin(), all.begin() + count);
  std::sort(mask.pairs.begin(), mask.pairs.end());
  mask.fraction = fraction;
  mask.seed = seed;
  return mask;
}

MembershipMatrix soft_kmeans_baseline(const Block& block, Index k, std::uint64_t seed) {
  const Index n = block.size();
  if (k < 2 || k > n) throw ContractViolation("soft k-means needs 2 <= K <= N");
  const Matrix& x = block.coords();
  std::mt19937_64 rng(seed);

  auto nearest = [&](const Matrix& centres, Index i, double* dist_sq) {
    Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < centres.rows(); ++c) {
      const double d = (x.row(i) - centres.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    if (dist_sq) *dist_sq = best_d;
    return best;
  };

  // k-means++ seeding
  Matrix centres(k, x.cols());
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  std::uniform_int_distribution<Index> first(0, n - 1);
  Index pick = first(rng);
  centres.row(0) = x.row(pick);
  used[static_cast<std::size_t>(pick)] = true;
  for (Index c = 1; c < k; ++c) {
    std::vector<double> weights(static_cast<std::size_t>(n), 0.0);
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      double d = 0.0;
      nearest(centres.topRows(c), i, &d);
      weights[static_cast<std::size_t>(i)] = d;
      total += d;
    }
    if (total > 0.0) {
      std::discrete_distribution<Index> draw(weights.begin(), weights.end());
      pick = draw(rng);
    } else {
      pick = static_cast<Index>(std::find(used.begin(), used.end(), false) - used.begin());
    }
    centres.row(c) = x.row(pick);
    used[static_cast<std::size_t>(pick)] = true;
  }

  // Lloyd iterations
  std::vector<Index> assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < 200; ++iter) {
    for (Index i = 0; i < n; ++i) assign[static_cast<std::size_t>(i)] = nearest(centres, i, nullptr);
    Matrix next = Matrix::Zero(k, x.cols());
    Vector counts = Vector::Zero(k);
    for (Index i = 0; i < n; ++i) {
      next.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
      counts(assign[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (Index c = 0; c < k; ++c) {
      if (counts(c) > 0.0) {
        next.row(c) /= counts(c);
        continue;
      }
      // Empty cluster: reseed at the point farthest from its current centre.
      Index far = 0;
      double far_d = -1.0;
      for (Index i = 0; i < n; ++i) {
        const double d = (x.row(i) - next.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      next.row(c) = x.row(far);
    }
    double shift = 0.0;
    for (Index c = 0; c < k; ++c) shift = std::max(shift, (next.row(c) - centres.row(c)).norm());
    centres = std::move(next);
    if (shift < 1e-8) break;
  }

  Matrix dist(n, k);
  double sigma_sq = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < k; ++c) dist(i, c) = (x.row(i) - centres.row(c)).squaredNorm();
    sigma_sq += dist.row(i).minCoeff();
  }
  sigma_sq /= static_cast<double>(n);

  Matrix s = Matrix::Zero(n, k);
  for (Index i = 0; i < n; ++i) {
    if (!(sigma_sq > 0.0)) {
      Index best = 0;
      dist.row(i).minCoeff(&best);
      s(i, best) = 1.0;
      continue;
    }
    const double shift = dist.row(i).minCoeff();
    double total = 0.0;
    for (Index c = 0; c < k; ++c) {
      s(i, c) = std::exp(-(dist(i, c) - shift) / sigma_sq);
      total += s(i, c);
    }
    s.row(i) /= total;
  }
  return MembershipMatrix(std::move(s));
}

BilinearFit bilinear_decoder_fit(const MembershipMatrix& s, const ProxyMatrix& proxy) {
  const Index n = s.rows();
  const Index k = s.cols();
  if (proxy.size() != n) throw ContractViolation("bilinear fit: proxy and memberships disagree on N");
  Matrix design(n * (n - 1), k * k);
  Vector target(n * (n - 1));
  Index row = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      for (Index a = 0; a < k; ++a)
        for (Index b = 0; b < k; ++b) design(row, a * k + b) = s(i, a) * s(j, b);
      target(row) = proxy.values()(i, j);
      ++row;
    }
  }
  const Vector w = pseudo_inverse(design.transpose() * design) * (design.transpose() * target);
  BilinearFit fit;
  fit.weights.resize(k, k);
  for (Index a = 0; a < k; ++a)
    for (Index b = 0; b < k; ++b) fit.weights(a, b) = w(a * k + b);
  fit.proxy_mae = (design * w - target).cwiseAbs().mean();
  return fit;
}

// ---- control suite ----

bool ControlSummary::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const ControlRow& r) { return r.pass; });
}

const ControlRow* ControlSummary::find(std::string_view check, std::string_view quantity) const {
  for (const auto& r : rows) {
    if (r.check == check && r.quantity == quantity) return &r;
  }
  return nullptr;
}

std::vector<RestartResult> run_restarts(const Block& block, const ProxyMatrix& proxy,
                                        const TrainConfig& base, const Hyperparams& hp,
                                        const std::vector<std::uint64_t>& seeds) {
  std::vector<std::future<RestartResult>> jobs;
  for (std::uint64_t seed : seeds) {
    jobs.push_back(std::async(std::launch::async, [&, seed] {
      TrainConfig cfg = base;
      cfg.seed = seed;
      RestartResult r;
      r.seed = seed;
      r.trace = train(block, proxy, cfg, hp);
      r.objective = r.trace.final_objective;
      return r;
    }));
  }
  std::vector<RestartResult> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

namespace {

const RestartResult& lowest_total(const std::vector<RestartResult>& runs) {
  return *std::min_element(runs.begin(), runs.end(), [](const auto& a, const auto& b) {
    return a.objective.total < b.objective.total;
  });
}

const RestartResult& proxy_anchor(const std::vector<RestartResult>& runs) {
  return *std::min_element(runs.begin(), runs.end(), [](const auto& a, const auto& b) {
    return a.objective.loss_a < b.objective.loss_a;
  });
}

double least_squares_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace

ControlSummary run_control_suite(const ControlSettings& settings) {
  if (settings.restart_seeds.empty()) throw ContractViolation("control suite needs restart seeds");
  ControlSummary summary;
  auto add = [&](std::string check, std::string quantity, double value, std::string criterion,
                 bool pass) {
    summary.rows.push_back({std::move(check), std::move(quantity), value, std::move(criterion), pass});
  };

  TrainConfig cfg;
  cfg.steps = settings.steps;
  cfg.learning_rate = settings.learning_rate;
  cfg.lambda = settings.lambda;
  Hyperparams hp = settings.hp;
  hp.k = settings.base.k;

  SyntheticSpec same_spec = settings.base;
  same_spec.kind = GeneratorKind::same_geometry;
  same_spec.seed = settings.fixture_seed;
  const SyntheticFixture same = generate_synthetic(same_spec);
  const auto same_runs = run_restarts(same.block, same.proxy, cfg, hp, settings.restart_seeds);

  SyntheticSpec mis_spec = same_spec;
  mis_spec.kind = GeneratorKind::misaligned;
  const SyntheticFixture mis = generate_synthetic(mis_spec);
  const auto mis_runs = run_restarts(mis.block, mis.proxy, cfg, hp, settings.restart_seeds);

  const double same_joint = lowest_total(same_runs).objective.total;
  const double same_proxy =
      std::min_element(same_runs.begin(), same_runs.end(), [](const auto& a, const auto& b) {
        return a.objective.loss_a < b.objective.loss_a;
      })->objective.loss_a;
  const double same_anchor_coord = proxy_anchor(same_runs).objective.loss_x;
  add("Same-geometry cross-view", "lowest observed joint loss", same_joint, "< 1e-6",
      same_joint < 1e-6);
  add("Same-geometry cross-view", "lowest observed proxy loss", same_proxy, "", true);
  add("Same-geometry cross-view", "proxy-anchor coordinate loss", same_anchor_coord, "", true);

  const double mis_joint = lowest_total(mis_runs).objective.total;
  const RestartResult& mis_anchor = proxy_anchor(mis_runs);
  const double mis_anchor_coord = mis_anchor.objective.loss_x;
  add("Misaligned cross-view", "lowest observed joint loss", mis_joint, "> 1e-3", mis_joint > 1e-3);
  add("Misaligned cross-view", "proxy-anchor coordinate loss", mis_anchor_coord,
      ">= 10x same-geometry proxy-anchor coordinate loss",
      mis_anchor_coord >= 10.0 * same_anchor_coord);

  // Residual injection at the planted memberships.
  SyntheticSpec inj_spec = same_spec;
  inj_spec.kind = GeneratorKind::residual_injection;
  inj_spec.gamma = 0.0;
  const SyntheticFixture inj = generate_synthetic(inj_spec);
  std::vector<double> gamma_sq, energy;
  double max_gap = 0.0, max_orth = 0.0;
  for (double gamma : settings.gammas) {
    const Block perturbed = inject_orthogonal_residual(
        inj.block, inj.memberships, gamma, derive_seed(settings.fixture_seed, 6));
    const PullbackResult pb = pullback_poles(perturbed, inj.memberships);
    gamma_sq.push_back(gamma * gamma);
    energy.push_back(pb.energy_res);
    max_gap = std::max(max_gap, pb.energy_gap);
    max_orth = std::max(max_orth, pb.orthogonality_error);
  }
  const double slope = least_squares_slope(gamma_sq, energy);
  add("Residual injection", "energy slope", slope, "1.000 +/- 1e-9", std::abs(slope - 1.0) <= 1e-9);
  add("Residual injection", "max energy gap", max_gap, "< 1e-10", max_gap < 1e-10);
  add("Residual injection", "max orthogonality error", max_orth, "< 1e-10", max_orth < 1e-10);

  // Pullback readout on the misaligned proxy-anchor fit.
  const MembershipMatrix anchor_s(mis_anchor.trace.memberships);
  const ReconstructionComparison cmp =
      compare_learned_vs_pullback(mis.block, anchor_s, mis_anchor.trace.poles, hp.epsilon);
  const PullbackResult anchor_pb = pullback_poles(mis.block, anchor_s);
  add("Pullback sanity", "learned error", cmp.learned, "", true);
  add("Pullback sanity", "pullback error", cmp.pullback, "<= learned error",
      cmp.pullback <= cmp.learned + 1e-12);
  add("Pullback sanity", "pullback energy gap", anchor_pb.energy_gap, "< 1e-10",
      anchor_pb.energy_gap < 1e-10);
  return summary;
}

// ---- held-out bench ----

const HeldoutSetting& HeldoutSummary::setting(GeneratorKind generator, DecoderKind decoder) const {
  for (const auto& s : settings) {
    if (s.generator == generator && s.decoder == decoder) return s;
  }
  throw ContractViolation("held-out summary has no such setting");
}

const HeldoutSetting& HeldoutSummary::best(GeneratorKind generator) const {
  const HeldoutSetting* best = nullptr;
  for (const auto& s : settings) {
    if (s.generator != generator) continue;
    if (!best || s.wins > best->wins || (s.wins == best->wins && s.mean_mae < best->mean_mae)) {
      best = &s;
    }
  }
  if (!best) throw ContractViolation("held-out summary has no such generator");
  return *best;
}

HeldoutSummary run_heldout_bench(const HeldoutSettings& settings) {
  HeldoutSummary summary;
  summary.seed_count = settings.seeds.size();
  TrainConfig cfg;
  cfg.steps = settings.steps;
  cfg.learning_rate = settings.learning_rate;
  cfg.lambda = settings.lambda;

  for (GeneratorKind generator : settings.generators) {
    std::vector<std::future<std::vector<HeldoutCell>>> jobs;
    for (std::uint64_t seed : settings.seeds) {
      jobs.push_back(std::async(std::launch::async, [&, generator, seed] {
        SyntheticSpec spec = settings.base;
        spec.kind = generator;
        spec.seed = seed;
        const SyntheticFixture fx = generate_synthetic(spec);
        const HoldoutMask mask = make_holdout_mask(spec.n, settings.holdout_fraction, seed);
        std::vector<HeldoutCell> cells;
        for (DecoderKind decoder : settings.decoders) {
          HeldoutCell cell{generator, decoder, seed, 0.0, false, {}};
          Hyperparams hp = settings.hp;
          hp.k = spec.k;
          hp.decoder = decoder;
          TrainConfig run = cfg;
          run.seed = seed;
          run.masked_pairs = mask.pairs;
          try {
            const FitTrace trace = train(fx.block, fx.proxy, run, hp);
            cell.mae = proxy_mae(fx.proxy, trace.predicted, mask.pairs);
          } catch (const FitDivergence& e) {
            cell.failed = true;
            cell.error = e.what();
          }
          cells.push_back(std::move(cell));
        }
        return cells;
      }));
    }
    std::vector<std::vector<HeldoutCell>> per_seed;
    for (auto& j : jobs) per_seed.push_back(j.get());

    for (DecoderKind decoder : settings.decoders) {
      HeldoutSetting s{generator, decoder, 0.0, 0, 0};
      double total = 0.0;
      for (const auto& cells : per_seed) {
        for (const auto& c : cells) {
          if (c.decoder == decoder && !c.failed) {
            total += c.mae;
            ++s.completed;
          }
        }
      }
      s.mean_mae = s.completed > 0 ? total / s.completed : std::numeric_limits<double>::quiet_NaN();
      summary.settings.push_back(s);
    }
    for (const auto& cells : per_seed) {
      const HeldoutCell* winner = nullptr;
      for (const auto& c : cells) {
        if (!c.failed && (!winner || c.mae < winner->mae)) winner = &c;
      }
      if (winner) {
        for (auto& s : summary.settings) {
          if (s.generator == generator && s.decoder == winner->decoder) ++s.wins;
        }
      }
      summary.cells.insert(summary.cells.end(), cells.begin(), cells.end());
    }
  }
  return summary;
}

}  // namespace rsd
