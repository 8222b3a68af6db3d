#pragma once

#include <functional>
#include <iosfwd>

#include "rsd/report.hpp"

namespace rsd {

enum ExitCode : int {
  kExitOk = 0,
  kExitUnexpected = 1,
  kExitConfig = 2,
  kExitIngestion = 3,
  kExitDivergence = 4,
  kExitAssertion = 5,
};

// Ingests, fits, and assembles the audit for `config` without writing files.
AuditRun run_audit(const RunConfig& config);

ControlSettings control_settings_from(const RunConfig& config);
HeldoutSettings heldout_settings_from(const RunConfig& config);

int cmd_synth_check(const RunConfig& config, std::ostream& log);
int cmd_heldout_bench(const RunConfig& config, std::ostream& log);
int cmd_audit(const RunConfig& config, std::ostream& log);

// Runs `body`, mapping rsd exceptions to exit codes and messages on `err`.
int run_guarded(const std::function<int()>& body, std::ostream& err);

}  // namespace rsd
