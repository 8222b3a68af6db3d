#include "rsd/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "rsd/errors.hpp"

namespace rsd {

using nlohmann::json;

RunConfig RunConfig::defaults_for(const std::string& command) {
  RunConfig c;
  c.command = command;
  if (command == "synth-check") {
    const ControlSettings cs;
    c.steps = cs.steps;
    c.learning_rate = cs.learning_rate;
    c.seeds = {cs.fixture_seed};
    c.out_path = "synth_check";
  } else if (command == "heldout-bench") {
    const HeldoutSettings hs;
    c.steps = hs.steps;
    c.learning_rate = hs.learning_rate;
    c.seeds = hs.seeds;
    c.holdout = hs.holdout_fraction;
    c.out_path = "heldout_bench";
  } else {
    c.steps = 500;
    c.learning_rate = 0.01;
    c.seeds = {0};
    c.out_path = "audit";
  }
  return c;
}

Hyperparams RunConfig::hyperparams() const {
  Hyperparams hp;
  hp.k = k;
  hp.encoder_hidden = encoder_hidden;
  hp.head_dim = head_dim;
  hp.temperature = temperature;
  hp.ball_margin = ball_margin;
  hp.router_hidden = router_hidden;
  hp.epsilon = epsilon;
  hp.decoder = parse_decoder_kind(decoder);
  return hp;
}

TrainConfig RunConfig::train_config(std::uint64_t seed) const {
  TrainConfig t;
  t.steps = steps;
  t.learning_rate = learning_rate;
  t.seed = seed;
  t.lambda = lambda;
  return t;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (k < 2) fail("--k must be at least 2");
  if (!(lambda > 0.0)) fail("--lambda must be positive");
  if (steps < 1) fail("--steps must be at least 1");
  if (!(learning_rate > 0.0)) fail("--lr must be positive");
  if (seeds.empty()) fail("at least one --seed is required");
  if (!(budget_x > 0.0) || !(budget_a > 0.0)) fail("budgets must be positive");
  if (head_dim < 1 || encoder_hidden < 1 || router_hidden < 1) fail("layer widths must be positive");
  if (!(temperature > 0.0)) fail("--tau must be positive");
  if (!(ball_margin > 0.0 && ball_margin < 1.0)) fail("--ball-margin must lie in (0, 1)");
  if (!(epsilon > 0.0)) fail("--epsilon must be positive");
  if (!(holdout >= 0.0 && holdout < 1.0)) fail("--holdout must lie in [0, 1)");
  if (decoder != "dual" && decoder != "dot" && decoder != "poincare") {
    fail("--decoder must be dual, dot or poincare");
  }
  if (format != "json" && format != "csv" && format != "both") fail("--format must be json, csv or both");
  if (out_path.empty()) fail("--out must not be empty");
  if (command == "audit") {
    if (embeddings_path.empty()) fail("audit requires --embeddings");
    if (block_path.empty()) fail("audit requires --block");
    if (proxy_kind != "cosine" && proxy_kind != "topic" && proxy_kind != "file") {
      fail("--proxy must be cosine, topic or file");
    }
    if (proxy_kind == "file" && proxy_path.empty()) fail("--proxy file requires --proxy-path");
    if (!(cross_topic_affinity >= 0.0 && cross_topic_affinity < same_topic_affinity &&
          same_topic_affinity <= 1.0)) {
      fail("topic affinities must satisfy 0 <= cross < same <= 1");
    }
  }
}

json to_json(const RunConfig& c) {
  return json{{"command", c.command},
              {"embeddings", c.embeddings_path},
              {"block", c.block_path},
              {"block_name", c.block_name},
              {"proxy", c.proxy_kind},
              {"proxy_path", c.proxy_path},
              {"same_topic_affinity", c.same_topic_affinity},
              {"cross_topic_affinity", c.cross_topic_affinity},
              {"k", c.k},
              {"lambda", c.lambda},
              {"steps", c.steps},
              {"lr", c.learning_rate},
              {"seeds", c.seeds},
              {"budget_x", c.budget_x},
              {"budget_a", c.budget_a},
              {"head_dim", c.head_dim},
              {"tau", c.temperature},
              {"ball_margin", c.ball_margin},
              {"encoder_hidden", c.encoder_hidden},
              {"router_hidden", c.router_hidden},
              {"epsilon", c.epsilon},
              {"decoder", c.decoder},
              {"holdout", c.holdout},
              {"out", c.out_path},
              {"format", c.format},
              {"plot_data", c.plot_data},
              {"baseline", c.baseline},
              {"readout_vocab", c.readout_vocab},
              {"readout_top", c.readout_top},
              {"adam", {{"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}}}};
}

json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return json{{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
  const Index rows = j.at("shape").at(0).get<Index>();
  const Index cols = j.at("shape").at(1).get<Index>();
  const auto& data = j.at("data");
  if (static_cast<Index>(data.size()) != rows * cols) {
    throw ContractViolation("matrix data length does not match its shape");
  }
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = data.at(static_cast<std::size_t>(r * cols + c)).get<double>();
  return m;
}

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

json witness_json(const WitnessRecord& w) {
  return json{{"eta_x", w.eta_x},
              {"eta_a", w.eta_a},
              {"loss_x", w.loss_x},
              {"loss_a", w.loss_a},
              {"coordinate_margin", w.coordinate_margin},
              {"proxy_margin", w.proxy_margin},
              {"coordinate_pass", w.coordinate_pass},
              {"proxy_pass", w.proxy_pass},
              {"witness", w.witness}};
}

json readouts_json(const std::vector<Readout>& readouts) {
  json out = json::array();
  for (const auto& r : readouts) {
    json words = json::array();
    for (const auto& w : r.words) words.push_back({{"word", w.word}, {"cosine", w.cosine}});
    out.push_back({{"direction", r.label}, {"words", words}});
  }
  return out;
}

template <class T>
std::pair<T, T> range_of(const std::vector<T>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {*lo, *hi};
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

json audit_report_json(const AuditRun& run, const RunConfig& config) {
  const AuditReport& r = run.report;
  json ranking = json::array();
  for (const auto& item : r.residual_ranking) {
    ranking.push_back({{"index", item.index}, {"item", item.item}, {"norm", item.norm}});
  }
  json dominated = json::object();
  for (Index c = 0; c < r.k; ++c) {
    json items = json::array();
    for (Index i = 0; i < r.n; ++i) {
      if (r.dominant_component[static_cast<std::size_t>(i)] == c) items.push_back(r.items[static_cast<std::size_t>(i)]);
    }
    dominated["c" + std::to_string(c)] = items;
  }
  json masked = json::array();
  for (const auto& [i, j] : r.masked_pairs) masked.push_back({i, j});

  json out{
      {"audit_unit",
       {{"block_name", r.block_name},
        {"proxy_source", r.proxy_source},
        {"decoder", std::string(to_string(r.decoder))},
        {"budgets", {{"eta_x", r.witness.eta_x}, {"eta_a", r.witness.eta_a}}},
        {"seed", config.seeds.front()},
        {"N", r.n},
        {"K", r.k},
        {"D", r.d}}},
      {"config", to_json(config)},
      {"items", r.items},
      {"losses",
       {{"loss_x", r.objective.loss_x},
        {"loss_a", r.objective.loss_a},
        {"lambda", r.objective.lambda},
        {"total", r.objective.total}}},
      {"rho_x", r.rho_x},
      {"proxy_loss", r.proxy_loss},
      {"proxy_mae", r.proxy_mae},
      {"proxy_mae_selection", r.proxy_mae_held_out ? "held-out pairs" : "all off-diagonal entries"},
      {"mix_weight", r.mix_weight},
      {"component_masses", to_std(r.component_masses)},
      {"small_mass_components", r.small_mass_components},
      {"dominant_component", r.dominant_component},
      {"dominated_items", dominated},
      {"entropy", to_std(r.entropy)},
      {"residual_norms", to_std(r.residual_norms)},
      {"residual_ranking", ranking},
      {"witness", witness_json(r.witness)},
      {"pullback",
       {{"rho_x_learned", r.pullback.rho_learned},
        {"rho_x_pullback", r.pullback.rho_pullback},
        {"energy_x", r.pullback.energy_x},
        {"energy_proj", r.pullback.energy_proj},
        {"energy_res", r.pullback.energy_res},
        {"orthogonality_error", r.pullback.orthogonality_error},
        {"energy_gap", r.pullback.energy_gap}}},
      {"component_permutation", r.permutation},
      {"masked_pairs", masked},
      {"warnings", r.warnings},
      {"metadata",
       {{"mix_weight_aggregation", "mean of off-diagonal entries of the symmetrized gate"},
        {"gate_symmetrization", "average (g_ij + g_ji) / 2"},
        {"component_order", "mass-canonical (descending component mass)"},
        {"epsilon", config.epsilon}}},
      {"matrices",
       {{"X", matrix_to_json(r.coords)},
        {"A", matrix_to_json(r.proxy)},
        {"S", matrix_to_json(r.memberships)},
        {"C", matrix_to_json(r.poles)},
        {"A_hat", matrix_to_json(r.predicted)},
        {"gate", matrix_to_json(r.gate)}}},
  };
  if (run.coverage.size() > 0) {
    out["token_coverage"] = to_std(run.coverage);
    out["mean_token_coverage"] = run.coverage.mean();
  }
  if (!run.readouts.empty()) out["readouts"] = readouts_json(run.readouts);
  if (!run.ingestion_warnings.empty()) out["ingestion_warnings"] = run.ingestion_warnings;
  if (run.baseline) {
    out["baseline"] = {{"method", "soft k-means memberships + least-squares bilinear decoder"},
                       {"rho_x", run.baseline->rho_x},
                       {"proxy_mae", run.baseline->proxy_mae},
                       {"S", matrix_to_json(run.baseline->memberships)},
                       {"W", matrix_to_json(run.baseline->bilinear_weights)}};
  }
  if (run.stability) {
    const SeedStability& st = *run.stability;
    json masses = json::array();
    for (const auto& m : st.masses) masses.push_back(to_std(m));
    json mass_ranges = json::array();
    const Index k = st.masses.empty() ? 0 : st.masses.front().size();
    for (Index c = 0; c < k; ++c) {
      std::vector<double> col;
      for (const auto& m : st.masses) col.push_back(m(c));
      const auto [lo, hi] = range_of(col);
      mass_ranges.push_back({lo, hi});
    }
    const auto [rlo, rhi] = range_of(st.rho_x);
    const auto [mlo, mhi] = range_of(st.proxy_mae);
    out["seed_stability"] = {{"seeds", st.seeds},
                             {"rho_x", st.rho_x},
                             {"proxy_mae", st.proxy_mae},
                             {"component_masses", masses},
                             {"top_residual_item", st.top_residual_item},
                             {"same_top_residual", st.same_top_residual},
                             {"rho_x_range", {rlo, rhi}},
                             {"proxy_mae_range", {mlo, mhi}},
                             {"mass_ranges", mass_ranges}};
  }
  return out;
}

double verify_report(const json& report) {
  const Matrix x = matrix_from_json(report.at("matrices").at("X"));
  const Matrix a = matrix_from_json(report.at("matrices").at("A"));
  const Matrix s_values = matrix_from_json(report.at("matrices").at("S"));
  const Matrix c = matrix_from_json(report.at("matrices").at("C"));
  const Matrix a_hat = matrix_from_json(report.at("matrices").at("A_hat"));
  const Matrix gate = matrix_from_json(report.at("matrices").at("gate"));
  const double eps = report.at("metadata").at("epsilon").get<double>();
  const auto items = report.at("items").get<std::vector<std::string>>();

  const Block block(items, x);
  const ProxyMatrix proxy(a, report.at("audit_unit").at("proxy_source").get<std::string>());
  const MembershipMatrix s(s_values);
  PairList masked;
  for (const auto& p : report.at("masked_pairs")) masked.emplace_back(p.at(0).get<Index>(), p.at(1).get<Index>());

  double worst = 0.0;
  auto check = [&](double stored, double recomputed) {
    worst = std::max(worst, std::abs(stored - recomputed));
  };
  check(report.at("rho_x").get<double>(), relative_reconstruction_error(block, s, c, eps));
  const double lx = loss_x(block, s, c, eps);
  const double la = loss_a(proxy, a_hat, eps, masked);
  check(report.at("losses").at("loss_x").get<double>(), lx);
  check(report.at("losses").at("loss_a").get<double>(), la);
  check(report.at("proxy_loss").get<double>(), la);
  check(report.at("proxy_mae").get<double>(), proxy_mae(proxy, a_hat, masked));
  check(report.at("mix_weight").get<double>(), relation_mix_weight(gate));

  const Vector masses = component_mass(s);
  const auto stored_masses = report.at("component_masses").get<std::vector<double>>();
  for (Index k = 0; k < masses.size(); ++k) check(stored_masses.at(static_cast<std::size_t>(k)), masses(k));
  const Vector entropy = assignment_entropy(s);
  const auto stored_entropy = report.at("entropy").get<std::vector<double>>();
  for (Index i = 0; i < entropy.size(); ++i) check(stored_entropy.at(static_cast<std::size_t>(i)), entropy(i));

  const ResidualMatrix res = residual(block, s, c);
  const auto ranking = residual_ranking(block, res, block.size());
  const auto& stored_ranking = report.at("residual_ranking");
  for (std::size_t t = 0; t < ranking.size(); ++t) {
    check(stored_ranking.at(t).at("norm").get<double>(), ranking[t].norm);
    if (stored_ranking.at(t).at("index").get<Index>() != ranking[t].index) worst = std::max(worst, 1.0);
  }

  const auto& w = report.at("witness");
  const WitnessRecord again =
      witness_report(lx, la, w.at("eta_x").get<double>(), w.at("eta_a").get<double>());
  if (again.witness != w.at("witness").get<bool>() ||
      again.coordinate_pass != w.at("coordinate_pass").get<bool>() ||
      again.proxy_pass != w.at("proxy_pass").get<bool>()) {
    worst = std::max(worst, 1.0);
  }
  check(w.at("coordinate_margin").get<double>(), again.coordinate_margin);
  check(w.at("proxy_margin").get<double>(), again.proxy_margin);

  const PullbackResult pb = pullback_poles(block, s);
  const auto& p = report.at("pullback");
  check(p.at("rho_x_pullback").get<double>(), pb.residual.norm() / std::max(x.norm(), eps));
  check(p.at("energy_res").get<double>(), pb.energy_res);
  check(p.at("energy_proj").get<double>(), pb.energy_proj);
  return worst;
}

json control_summary_json(const ControlSummary& summary, const RunConfig& config) {
  json rows = json::array();
  for (const auto& r : summary.rows) {
    rows.push_back({{"check", r.check},
                    {"quantity", r.quantity},
                    {"value", r.value},
                    {"criterion", r.criterion},
                    {"pass", r.pass}});
  }
  return json{{"table", "control suite"},
              {"rows", rows},
              {"all_pass", summary.all_pass()},
              {"config", to_json(config)}};
}

std::string control_summary_csv(const ControlSummary& summary) {
  std::ostringstream os;
  os << "check,quantity,value,criterion,pass\n";
  for (const auto& r : summary.rows) {
    os << csv_escape(r.check) << ',' << csv_escape(r.quantity) << ',' << format_double(r.value)
       << ',' << csv_escape(r.criterion) << ',' << (r.pass ? "true" : "false") << '\n';
  }
  return os.str();
}

json heldout_summary_json(const HeldoutSummary& summary, const RunConfig& config) {
  json cells = json::array();
  for (const auto& c : summary.cells) {
    json cell{{"generator", std::string(to_string(c.generator))},
              {"decoder", std::string(to_string(c.decoder))},
              {"seed", c.seed},
              {"failed", c.failed}};
    if (c.failed) {
      cell["error"] = c.error;
    } else {
      cell["heldout_mae"] = c.mae;
    }
    cells.push_back(std::move(cell));
  }
  json settings = json::array();
  for (const auto& s : summary.settings) {
    settings.push_back({{"generator", std::string(to_string(s.generator))},
                        {"decoder", std::string(to_string(s.decoder))},
                        {"mean_heldout_mae", s.mean_mae},
                        {"wins", s.wins},
                        {"completed", s.completed}});
  }
  json best = json::object();
  for (const auto& s : summary.settings) {
    const auto& b = summary.best(s.generator);
    best[std::string(to_string(s.generator))] = {{"decoder", std::string(to_string(b.decoder))},
                                                 {"mean_heldout_mae", b.mean_mae},
                                                 {"wins", b.wins},
                                                 {"of", summary.seed_count}};
  }
  return json{{"table", "held-out bench"},
              {"settings", settings},
              {"best", best},
              {"cells", cells},
              {"config", to_json(config)}};
}

std::string heldout_summary_csv(const HeldoutSummary& summary) {
  std::ostringstream os;
  os << "generator,decoder,mean_heldout_mae,wins,seeds\n";
  for (const auto& s : summary.settings) {
    os << to_string(s.generator) << ',' << to_string(s.decoder) << ',' << format_double(s.mean_mae)
       << ',' << s.wins << ',' << summary.seed_count << '\n';
  }
  return os.str();
}

std::string plot_items_csv(const AuditRun& run) {
  const AuditReport& r = run.report;
  std::ostringstream os;
  os << "item";
  for (Index c = 0; c < r.k; ++c) os << ",s_" << c;
  os << ",dominant,residual_norm,entropy\n";
  for (Index i = 0; i < r.n; ++i) {
    os << csv_escape(r.items[static_cast<std::size_t>(i)]);
    for (Index c = 0; c < r.k; ++c) os << ',' << format_double(r.memberships(i, c));
    os << ",c" << r.dominant_component[static_cast<std::size_t>(i)] << ','
       << format_double(r.residual_norms(i)) << ',' << format_double(r.entropy(i)) << '\n';
  }
  return os.str();
}

std::string plot_readouts_csv(const AuditRun& run) {
  std::ostringstream os;
  os << "direction,rank,word,cosine\n";
  for (const auto& readout : run.readouts) {
    for (std::size_t t = 0; t < readout.words.size(); ++t) {
      os << readout.label << ',' << t + 1 << ',' << csv_escape(readout.words[t].word) << ','
         << format_double(readout.words[t].cosine) << '\n';
    }
  }
  return os.str();
}

void write_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, target);
}

}  // namespace rsd
