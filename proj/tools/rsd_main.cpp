#include <algorithm>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "rsd/commands.hpp"
#include "rsd/errors.hpp"

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != part.size()) throw rsd::ConfigError("invalid --seed entry '" + part + "'");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw rsd::ConfigError("--seed needs at least one value");
  return seeds;
}

struct Options {
  rsd::RunConfig config;
  std::string seeds;
  std::string config_path;
};

void add_common(CLI::App& sub, Options& o) {
  sub.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  auto& c = o.config;
  sub.add_option("--k", c.k, "number of components");
  sub.add_option("--lambda", c.lambda, "proxy loss weight");
  sub.add_option("--steps", c.steps, "Adam steps");
  sub.add_option("--lr", c.learning_rate, "Adam learning rate");
  sub.add_option("--seed", o.seeds, "seed or comma-separated seed list");
  sub.add_option("--decoder", c.decoder, "dual | dot | poincare");
  sub.add_option("--holdout", c.holdout, "held-out pair fraction");
  sub.add_option("--out", c.out_path, "output path prefix");
  sub.add_option("--format", c.format, "json | csv | both");
  sub.add_option("--head-dim", c.head_dim, "relation head width m");
  sub.add_option("--tau", c.temperature, "decoder temperature");
  sub.add_option("--ball-margin", c.ball_margin, "Poincare ball margin");
  sub.add_option("--encoder-hidden", c.encoder_hidden, "encoder hidden width");
  sub.add_option("--router-hidden", c.router_hidden, "router hidden width");
  sub.add_option("--epsilon", c.epsilon, "numerical floor");
  sub.add_option("--config", o.config_path, "flat key = value file; explicit flags take precedence");
}

// Rewrites `rsd <cmd> ... --config FILE ...` so the file's entries come first
// as --key=value arguments and explicit flags override them.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> from_file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      continue;
    }
    std::vector<CLI::ConfigItem> items;
    try {
      items = CLI::ConfigINI().from_file(path);
    } catch (const CLI::Error& e) {
      throw rsd::ConfigError("cannot read config file " + path + ": " + e.what());
    }
    for (const auto& item : items) {
      if (item.name == "++" || item.name == "--" || item.inputs.empty()) continue;
      std::string value;
      for (const auto& in : item.inputs) value += (value.empty() ? "" : ",") + in;
      from_file.push_back("--" + item.name + "=" + value);
    }
  }
  if (!from_file.empty() && !args.empty()) args.insert(args.begin() + 1, from_file.begin(), from_file.end());
  std::reverse(args.begin(), args.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Residual soft decomposition audits"};
  app.require_subcommand(1);

  Options synth{rsd::RunConfig::defaults_for("synth-check"), {}, {}};
  Options bench{rsd::RunConfig::defaults_for("heldout-bench"), {}, {}};
  Options audit{rsd::RunConfig::defaults_for("audit"), {}, {}};

  auto* synth_cmd = app.add_subcommand("synth-check", "synthetic cross-view control suite");
  add_common(*synth_cmd, synth);
  auto* bench_cmd = app.add_subcommand("heldout-bench", "held-out proxy decoder bench");
  add_common(*bench_cmd, bench);
  auto* audit_cmd = app.add_subcommand("audit", "audit an embedded text block");
  add_common(*audit_cmd, audit);
  auto& ac = audit.config;
  audit_cmd->add_option("--embeddings", ac.embeddings_path, "GloVe-style text embeddings");
  audit_cmd->add_option("--block", ac.block_path, "block fixture (item[TAB topic] per line)");
  audit_cmd->add_option("--block-name", ac.block_name, "block name in the report");
  audit_cmd->add_option("--proxy", ac.proxy_kind, "cosine | topic | file");
  audit_cmd->add_option("--proxy-path", ac.proxy_path, "N x N proxy CSV for --proxy file");
  audit_cmd->add_option("--same-topic", ac.same_topic_affinity, "topic proxy within-topic affinity");
  audit_cmd->add_option("--cross-topic", ac.cross_topic_affinity, "topic proxy cross-topic affinity");
  audit_cmd->add_option("--budget-x", ac.budget_x, "coordinate loss budget");
  audit_cmd->add_option("--budget-a", ac.budget_a, "proxy loss budget");
  audit_cmd->add_flag("--plot-data", ac.plot_data, "write per-item and readout CSVs");
  audit_cmd->add_flag("--baseline", ac.baseline, "run the soft k-means baseline");
  audit_cmd->add_option("--readout-vocab", ac.readout_vocab, "leading embedding lines used for readouts");
  audit_cmd->add_option("--readout-top", ac.readout_top, "words per readout");

  std::vector<std::string> args;
  const int config_status = rsd::run_guarded(
      [&] {
        args = expand_config(argc, argv);
        return rsd::kExitOk;
      },
      std::cerr);
  if (config_status != rsd::kExitOk) return config_status;

  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? rsd::kExitOk : rsd::kExitConfig;
  }

  return rsd::run_guarded(
      [&]() {
        Options& o = synth_cmd->parsed() ? synth : bench_cmd->parsed() ? bench : audit;
        if (!o.seeds.empty()) o.config.seeds = parse_seeds(o.seeds);
        if (synth_cmd->parsed()) return rsd::cmd_synth_check(o.config, std::cout);
        if (bench_cmd->parsed()) return rsd::cmd_heldout_bench(o.config, std::cout);
        return rsd::cmd_audit(o.config, std::cout);
      },
      std::cerr);
}
