#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsd/diagnostics.hpp"
#include "rsd/fixtures.hpp"

namespace rsd {

// Everything needed to reproduce one command invocation. Echoed verbatim
// into every report.
struct RunConfig {
  std::string command;
  std::string embeddings_path;
  std::string block_path;
  std::string block_name;
  std::string proxy_kind = "cosine";  // cosine | topic | file
  std::string proxy_path;
  double same_topic_affinity = 1.0;
  double cross_topic_affinity = 0.15;
  Index k = 2;
  double lambda = 1.0;
  int steps = 500;
  double learning_rate = 0.01;
  std::vector<std::uint64_t> seeds{0};
  double budget_x = kDefaultBudget;
  double budget_a = kDefaultBudget;
  Index head_dim = 8;
  double temperature = 1.0;
  double ball_margin = 1e-3;
  Index encoder_hidden = 32;
  Index router_hidden = 16;
  double epsilon = kDefaultEpsilon;
  std::string decoder = "dual";
  double holdout = 0.0;  // 0 disables the held-out mask
  std::string out_path;
  std::string format = "both";  // json | csv | both (tables)
  bool plot_data = false;
  bool baseline = false;
  long readout_vocab = 50000;
  Index readout_top = 5;

  static RunConfig defaults_for(const std::string& command);
  Hyperparams hyperparams() const;
  TrainConfig train_config(std::uint64_t seed) const;
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);

// {"shape": [rows, cols], "data": [row-major values]}
nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

struct SeedStability {
  std::vector<std::uint64_t> seeds;
  std::vector<double> rho_x;
  std::vector<double> proxy_mae;
  std::vector<Vector> masses;
  std::vector<std::string> top_residual_item;
  int same_top_residual = 0;  // seeds agreeing with the first seed's top item
};

struct BaselineResult {
  double rho_x = 0.0;
  double proxy_mae = 0.0;
  Matrix memberships;
  Matrix bilinear_weights;
};

struct AuditRun {
  AuditReport report;
  Vector coverage;
  std::vector<Readout> readouts;
  std::optional<BaselineResult> baseline;
  std::optional<SeedStability> stability;
  std::vector<std::string> ingestion_warnings;
};

nlohmann::json audit_report_json(const AuditRun& run, const RunConfig& config);

// Recomputes every derived field from the stored matrices and returns the
// largest absolute discrepancy (0 when the report is internally consistent).
double verify_report(const nlohmann::json& report);

nlohmann::json control_summary_json(const ControlSummary& summary, const RunConfig& config);
std::string control_summary_csv(const ControlSummary& summary);

nlohmann::json heldout_summary_json(const HeldoutSummary& summary, const RunConfig& config);
std::string heldout_summary_csv(const HeldoutSummary& summary);

std::string plot_items_csv(const AuditRun& run);
std::string plot_readouts_csv(const AuditRun& run);

// Writes to `path.tmp` then renames over `path`.
void write_atomic(const std::string& path, const std::string& content);

}  // namespace rsd
