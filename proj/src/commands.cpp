#include "rsd/commands.hpp"

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <ostream>

#include "rsd/errors.hpp"
#include "rsd/ingestion.hpp"
#include "rsd/pullback.hpp"

namespace rsd {

namespace {

std::string block_name_of(const RunConfig& config) {
  if (!config.block_name.empty()) return config.block_name;
  return std::filesystem::path(config.block_path).stem().string();
}

std::unordered_set<std::string> block_tokens(const BlockFixture& fixture) {
  std::unordered_set<std::string> tokens;
  for (const auto& item : fixture.items)
    for (auto& t : tokenize(item)) tokens.insert(std::move(t));
  return tokens;
}

ProxyMatrix build_proxy(const RunConfig& config, const BlockFixture& fixture, const Block& block) {
  if (config.proxy_kind == "cosine") return cosine_proxy(block);
  if (config.proxy_kind == "topic") {
    if (fixture.topics.empty()) throw IngestionError("--proxy topic needs topic labels in " + config.block_path);
    TopicSpec spec;
    spec.same_topic_affinity = config.same_topic_affinity;
    spec.cross_topic_affinity = config.cross_topic_affinity;
    for (std::size_t i = 0; i < fixture.items.size(); ++i) spec.topic_of[fixture.items[i]] = fixture.topics[i];
    return topic_proxy(block.items(), spec);
  }
  const ProxyMatrix p = load_proxy_csv(config.proxy_path, "file:" + config.proxy_path);
  if (p.size() != block.size()) {
    throw IngestionError("proxy matrix has " + std::to_string(p.size()) + " rows but the block has " +
                         std::to_string(block.size()) + " items");
  }
  return p;
}

void emit(const std::string& path, const std::string& content, std::ostream& log) {
  write_atomic(path, content);
  log << "wrote " << path << '\n';
}

}  // namespace

AuditRun run_audit(const RunConfig& config) {
  config.validate();
  const BlockFixture fixture = load_block_fixture(config.block_path);
  EmbeddingLoadOptions opts;
  opts.requested = block_tokens(fixture);
  opts.keep_first = config.readout_vocab;
  const EmbeddingTable table = load_embeddings(config.embeddings_path, opts);
  EmbeddedStatements embedded = embed_statements(fixture.items, table);
  const Block& block = embedded.block;
  const ProxyMatrix proxy = build_proxy(config, fixture, block);

  const Hyperparams hp = config.hyperparams();
  const std::uint64_t seed = config.seeds.front();
  TrainConfig tc = config.train_config(seed);
  PairList masked;
  if (config.holdout > 0.0) {
    masked = make_holdout_mask(block.size(), config.holdout, seed).pairs;
    tc.masked_pairs = masked;
  }

  AuditRun run;
  run.coverage = embedded.coverage;
  run.ingestion_warnings = table.warnings();
  const std::string name = block_name_of(config);
  const FitTrace trace = train(block, proxy, tc, hp);
  run.report = build_audit_report(name, block, proxy, trace, config.budget_x, config.budget_a, masked);

  const MembershipMatrix s(run.report.memberships);
  const ResidualMatrix res = residual(block, s, run.report.poles);
  run.readouts = direction_readouts(run.report.poles, res.values, table, config.readout_top, block.items());

  if (config.baseline) {
    const MembershipMatrix sb = soft_kmeans_baseline(block, config.k, seed);
    const PullbackResult pb = pullback_poles(block, sb);
    const BilinearFit bf = bilinear_decoder_fit(sb, proxy);
    BaselineResult b;
    b.rho_x = relative_reconstruction_error(block, sb, pb.poles, config.epsilon);
    b.proxy_mae = bf.proxy_mae;
    b.memberships = sb.values();
    b.bilinear_weights = bf.weights;
    run.baseline = b;
  }

  if (config.seeds.size() > 1) {
    SeedStability st;
    for (std::uint64_t sd : config.seeds) {
      TrainConfig t = config.train_config(sd);
      PairList m;
      if (config.holdout > 0.0) {
        m = make_holdout_mask(block.size(), config.holdout, sd).pairs;
        t.masked_pairs = m;
      }
      const FitTrace tr = sd == seed ? trace : train(block, proxy, t, hp);
      const AuditReport rep = build_audit_report(name, block, proxy, tr, config.budget_x, config.budget_a, m);
      st.seeds.push_back(sd);
      st.rho_x.push_back(rep.rho_x);
      st.proxy_mae.push_back(rep.proxy_mae);
      st.masses.push_back(rep.component_masses);
      st.top_residual_item.push_back(rep.residual_ranking.front().item);
    }
    for (const auto& item : st.top_residual_item) st.same_top_residual += item == st.top_residual_item.front();
    run.stability = st;
  }
  return run;
}

ControlSettings control_settings_from(const RunConfig& config) {
  ControlSettings s;
  s.fixture_seed = config.seeds.front();
  s.restart_seeds.clear();
  for (std::uint64_t i = 0; i < 8; ++i) s.restart_seeds.push_back(s.fixture_seed + i);
  s.steps = config.steps;
  s.learning_rate = config.learning_rate;
  s.lambda = config.lambda;
  s.hp = config.hyperparams();
  s.base.k = config.k;
  s.base.head_dim = config.head_dim;
  s.base.temperature = config.temperature;
  s.base.ball_margin = config.ball_margin;
  return s;
}

HeldoutSettings heldout_settings_from(const RunConfig& config) {
  HeldoutSettings s;
  s.seeds = config.seeds;
  s.steps = config.steps;
  s.learning_rate = config.learning_rate;
  s.lambda = config.lambda;
  s.holdout_fraction = config.holdout;
  s.hp = config.hyperparams();
  s.base.k = config.k;
  s.base.head_dim = config.head_dim;
  s.base.temperature = config.temperature;
  s.base.ball_margin = config.ball_margin;
  return s;
}

int cmd_synth_check(const RunConfig& config, std::ostream& log) {
  config.validate();
  const ControlSummary summary = run_control_suite(control_settings_from(config));
  for (const auto& r : summary.rows) {
    log << std::left << std::setw(26) << r.check << std::setw(44) << r.quantity << std::setprecision(6)
        << std::setw(14) << r.value << (r.criterion.empty() ? "(info)" : (r.pass ? "PASS " : "FAIL ") + r.criterion)
        << '\n';
  }
  if (config.format != "csv") emit(config.out_path + ".json", control_summary_json(summary, config).dump(2) + "\n", log);
  if (config.format != "json") emit(config.out_path + ".csv", control_summary_csv(summary), log);
  for (const auto& r : summary.rows) {
    if (!r.pass) std::cerr << "assertion failed: " << r.check << " / " << r.quantity << " (" << r.criterion << ")\n";
  }
  return summary.all_pass() ? kExitOk : kExitAssertion;
}

int cmd_heldout_bench(const RunConfig& config, std::ostream& log) {
  config.validate();
  if (!(config.holdout > 0.0)) throw ConfigError("heldout-bench needs --holdout > 0");
  const HeldoutSummary summary = run_heldout_bench(heldout_settings_from(config));
  for (const auto& s : summary.settings) {
    log << std::left << std::setw(20) << to_string(s.generator) << std::setw(10) << to_string(s.decoder)
        << "mean MAE " << std::setprecision(4) << std::fixed << s.mean_mae << std::defaultfloat << "  wins "
        << s.wins << '/' << summary.seed_count << '\n';
  }
  if (config.format != "csv") emit(config.out_path + ".json", heldout_summary_json(summary, config).dump(2) + "\n", log);
  if (config.format != "json") emit(config.out_path + ".csv", heldout_summary_csv(summary), log);
  return kExitOk;
}

int cmd_audit(const RunConfig& config, std::ostream& log) {
  const AuditRun run = run_audit(config);
  const AuditReport& r = run.report;
  log << r.block_name << ": N=" << r.n << " K=" << r.k << " D=" << r.d << " rho_X=" << r.rho_x
      << " proxy MAE=" << r.proxy_mae << " witness=" << (r.witness.witness ? "yes" : "no") << '\n';
  for (const auto& w : r.warnings) log << "warning: " << w << '\n';
  emit(config.out_path + ".json", audit_report_json(run, config).dump(2) + "\n", log);
  if (config.plot_data) {
    emit(config.out_path + "_items.csv", plot_items_csv(run), log);
    emit(config.out_path + "_readouts.csv", plot_readouts_csv(run), log);
  }
  return kExitOk;
}

int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IngestionError& e) {
    err << "ingestion error: " << e.what() << '\n';
    return kExitIngestion;
  } catch (const FitDivergence& e) {
    err << "fit diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const ContractViolation& e) {
    err << "assertion failed: " << e.what() << '\n';
    return kExitAssertion;
  } catch (const DegenerateObjective& e) {
    err << "degenerate objective: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUnexpected;
  }
}

}  // namespace rsd
