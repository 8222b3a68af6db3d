#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rsd/commands.hpp"
#include "rsd/errors.hpp"

using namespace rsd;

namespace {

const std::string kData = RSD_DATA_DIR;

RunConfig audit_config(const std::string& block, Index k) {
  RunConfig c = RunConfig::defaults_for("audit");
  c.embeddings_path = kData + "/tiny_embeddings.txt";
  c.block_path = kData + block;
  c.k = k;
  c.steps = 120;
  c.out_path = (std::filesystem::temp_directory_path() / "rsd_unit" / "audit").string();
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("matrix json round trip is row-major with a shape") {
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const auto j = matrix_to_json(m);
  CHECK(j["shape"] == nlohmann::json::array({2, 3}));
  CHECK(j["data"][1] == 2.0);
  CHECK(matrix_from_json(j) == m);
  auto broken = j;
  broken["data"].erase(0);
  CHECK_THROWS_AS(matrix_from_json(broken), ContractViolation);
}

TEST_CASE("config validation per command") {
  RunConfig c = RunConfig::defaults_for("audit");
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = audit_config("/months.txt", 2);
  CHECK_NOTHROW(c.validate());
  c.decoder = "linear";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = audit_config("/months.txt", 2);
  c.proxy_kind = "file";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = audit_config("/months.txt", 1);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(RunConfig::defaults_for("synth-check").validate());
  CHECK(RunConfig::defaults_for("heldout-bench").steps == 320);
  CHECK(RunConfig::defaults_for("heldout-bench").seeds.size() == 8);
}

TEST_CASE("audit report is self-consistent and echoes its configuration") {
  RunConfig c = audit_config("/theorem_statements.tsv", 3);
  c.proxy_kind = "topic";
  c.seeds = {23, 29};
  c.baseline = true;
  const AuditRun run = run_audit(c);
  const auto j = audit_report_json(run, c);
  CHECK(verify_report(j) < 1e-9);
  CHECK(j["audit_unit"]["proxy_source"] == "topic");
  CHECK(j["audit_unit"]["seed"] == 23);
  CHECK(j["audit_unit"]["decoder"] == "dual");
  CHECK(j["config"]["steps"] == 120);
  CHECK(j["config"]["lr"] == 0.01);
  CHECK(j["seed_stability"]["seeds"].size() == 2);
  CHECK(j.contains("baseline"));
  CHECK(j["mean_token_coverage"] == 1.0);
  CHECK(j["readouts"].size() == 5);

  auto tampered = j;
  tampered["rho_x"] = j["rho_x"].get<double>() + 1e-3;
  CHECK(verify_report(tampered) >= 1e-3 - 1e-12);
}

TEST_CASE("held-out audits verify against the masked pairs") {
  RunConfig c = audit_config("/months.txt", 2);
  c.holdout = 0.2;
  const AuditRun run = run_audit(c);
  CHECK(run.report.masked_pairs.size() == 13);
  CHECK(run.report.proxy_mae_held_out);
  CHECK(verify_report(audit_report_json(run, c)) < 1e-9);
}

TEST_CASE("audit command writes json and plot data") {
  RunConfig c = audit_config("/dog_wolf.txt", 2);
  c.plot_data = true;
  std::ostringstream log;
  CHECK(cmd_audit(c, log) == kExitOk);
  const std::string items = slurp(c.out_path + "_items.csv");
  CHECK(items.rfind("item,s_0,s_1,dominant,residual_norm,entropy\n", 0) == 0);
  CHECK(slurp(c.out_path + "_readouts.csv").rfind("direction,rank,word,cosine\n", 0) == 0);
  const auto j = nlohmann::json::parse(slurp(c.out_path + ".json"));
  bool warned = false;
  for (const auto& w : j["warnings"]) warned = warned || w.get<std::string>().find("N=2") != std::string::npos;
  CHECK(warned);
  CHECK_FALSE(std::filesystem::exists(c.out_path + ".json.tmp"));
}

TEST_CASE("guarded commands map errors to exit codes") {
  std::ostringstream err;
  CHECK(run_guarded([] { return 0; }, err) == kExitOk);
  CHECK(run_guarded([]() -> int { throw ConfigError("x"); }, err) == kExitConfig);
  CHECK(run_guarded([]() -> int { throw ParseError("x", 3); }, err) == kExitIngestion);
  CHECK(run_guarded([]() -> int { throw FitDivergence("x", 4); }, err) == kExitDivergence);
  CHECK(run_guarded([]() -> int { throw ContractViolation("x"); }, err) == kExitAssertion);
  CHECK(run_guarded([]() -> int { throw std::logic_error("x"); }, err) == kExitUnexpected);
  RunConfig c = audit_config("/months.txt", 2);
  c.embeddings_path = "/nonexistent.txt";
  CHECK(run_guarded([&] { return cmd_audit(c, err); }, err) == kExitIngestion);
}

TEST_CASE("control and held-out tables serialize every row") {
  ControlSummary s;
  s.rows.push_back({"Residual injection", "energy slope", 1.0, "1.000 +/- 1e-9", true});
  s.rows.push_back({"Pullback sanity", "learned error", 0.2, "", true});
  const std::string csv = control_summary_csv(s);
  CHECK(csv == "check,quantity,value,criterion,pass\nResidual injection,energy slope,1,1.000 +/- 1e-9,true\n"
               "Pullback sanity,learned error,0.20000000000000001,,true\n");
  const auto j = control_summary_json(s, RunConfig::defaults_for("synth-check"));
  CHECK(j["rows"].size() == 2);
  CHECK(j["all_pass"] == true);
}
