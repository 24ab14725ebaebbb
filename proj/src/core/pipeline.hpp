#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ahp.hpp"
#include "collector.hpp"
#include "correlator.hpp"
#include "error.hpp"
#include "policy.hpp"
#include "reachability.hpp"
#include "res.hpp"

namespace siem::pipeline {

namespace fs = std::filesystem;

enum ExitCode : int {
  kExitOk = 0,
  kExitFindings = 1,
  kExitConfig = 2,
  kExitStage = 3,
};

struct PipelineConfig {
  fs::path collector;
  fs::path rules;
  fs::path system;
  fs::path policies;
  std::optional<fs::path> hierarchy;  // default hierarchy when absent
  res::ThresholdParams res{4, 3};
  unsigned key_bits = 512;
  res::FaultModel faults;
  std::uint64_t seed = 1;
  bool os_entropy = false;  // key generation from the system RNG, not the seed
  fs::path out_dir = "out";
};

/// Relative paths resolve against the config file's directory. Throws
/// Error(invalid_config) or Error(invalid_params).
PipelineConfig load_config(const fs::path& file);

/// Checks that inputs exist and parameters are coherent.
void validate(const PipelineConfig& cfg);

/// Thrown by run_pipeline with the failing stage's name.
class StageFailure : public Error {
 public:
  StageFailure(std::string stage, const Error& cause)
      : Error(cause.kind(), cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

// Individual stages. Each reads its inputs from files and writes its
// artifacts into `out`, exactly as the full run does.

struct CollectSummary {
  std::size_t lines_in = 0;
  std::size_t events = 0;
  std::size_t emitted = 0;
  std::size_t quarantined = 0;
};
CollectSummary collect(const fs::path& collector_config, const fs::path& out);

struct CorrelateSummary {
  std::size_t events = 0;
  std::size_t alarms = 0;
  std::map<std::string, std::size_t> alarms_by_rule;
};
CorrelateSummary correlate(const fs::path& events, const fs::path& rules, const fs::path& out);

struct ResolveSummary {
  std::size_t anomalies = 0;
  std::size_t conflicts = 0;
  std::vector<std::string> dropped;
  std::vector<policy::AbstractPolicy> effective;
};
ResolveSummary resolve_conflicts(const fs::path& policies, const fs::path& system,
                                 const std::optional<fs::path>& hierarchy, const fs::path& out);

struct ReachSummary {
  std::map<std::string, std::size_t> findings;  // by kind, pre-reaction
  std::size_t suggestions = 0;
  std::map<std::string, std::size_t> findings_post;
  std::size_t total_post = 0;
};
/// With `resolutions` (resolutions.json) dropped policies are excluded.
/// With `react_after` the remediation is applied and the analysis re-run.
ReachSummary reachability(const fs::path& policies, const fs::path& system,
                          const std::optional<fs::path>& resolutions, const fs::path& out,
                          bool react_after);

void react(const fs::path& system, const fs::path& remediation, const fs::path& out_system);

struct SignSummary {
  std::size_t stored = 0;
  std::size_t dead_letters = 0;
  std::map<unsigned, std::size_t> flagged;  // node -> records that flagged it
};
/// Key generation from the seed, then signing every alarm into out/store.res.
SignSummary res_sign(const fs::path& alarms, const res::ThresholdParams& params, unsigned key_bits,
                     std::uint64_t seed, const res::FaultModel& faults, const fs::path& out,
                     bool os_entropy = false);

res::AuditReport res_audit(const fs::path& store, const fs::path& public_key, const fs::path& out_report);

void dam_sim(const fs::path& out_dir);

/// Full run. Returns kExitOk when post-reaction findings are zero and the
/// store audits clean, kExitFindings otherwise. Writes summary.json. Stage
/// errors raise StageFailure after writing error.json.
int run_pipeline(const PipelineConfig& cfg);

res::FaultModel faults_from_json(const nlohmann::json& j);

}  // namespace siem::pipeline
