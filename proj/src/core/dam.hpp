#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "event.hpp"
#include "policy.hpp"

// Hydroelectric dam: turbine power model, stepped process simulation and the
// scripted misuse case used for end-to-end runs.
namespace siem::dam {

struct DamState {
  double delta_h = 100.0;  // m, constant head
  double Q = 50.0;         // m^3/s
  double eta = 0.9;
  double rho = 1000.0;     // kg/m^3
  double g = 10.0;         // m/s^2
  double rpm = 0.0;
  double rpm_limit = 1000.0;
  double power_limit = 90e6;  // W

  double Q_target = 50.0;
  double max_ramp = 40.0;       // m^3/s per second
  double rpm_per_watt = 1e-5;
  bool destroyed = false;
  std::int64_t t_ms = 0;
};

/// Throws Error(invalid_params) on negative quantities or eta outside (0, 1].
void validate(const DamState& s);

double power(const DamState& s) noexcept;

/// Flow at which power reaches the limit.
double critical_flow(const DamState& s) noexcept;

inline constexpr std::string_view kFlowSensor = "flow_sensor";
inline constexpr std::string_view kFlowSensorIp = "192.168.10.11";

enum class CommandKind { set_Q, login, firmware_write };

struct Command {
  std::int64_t at_ms = 0;
  CommandKind kind = CommandKind::set_Q;
  double value = 0.0;    // set_Q target
  std::string host;      // origin host id for IT commands
  std::string user;
  bool success = false;  // login outcome
};

struct ScenarioScript {
  std::int64_t start_ms = 0;
  std::int64_t duration_ms = 0;
  std::int64_t dt_ms = 1000;
  std::vector<Command> commands;  // sorted by at_ms
};

struct StepResult {
  DamState state;
  std::vector<NormalizedEvent> events;
};

/// One reading of the current state (no time advance).
NormalizedEvent reading(const DamState& s, std::uint64_t seq);

/// Advances by dt seconds. A set_Q command changes the target; Q then ramps
/// towards it at max_ramp. Emits one flow_rate_reading; the first time power
/// or rpm exceeds its limit also a turbine_emergency, after which the state
/// is frozen and readings carry phase=post-failure.
StepResult step(const DamState& s, const std::optional<Command>& command, double dt);

struct MisuseCase {
  policy::SystemDescription system;
  std::vector<policy::AbstractPolicy> policies;
  ScenarioScript script;
  std::map<std::string, std::vector<std::string>> logs;  // stream id -> raw lines
  std::vector<NormalizedEvent> physical_events;
};

/// Builds the fixed scenario and runs its script through the simulator.
MisuseCase misuse_case();

/// Writes the scenario bundle: system, policies, hierarchy, collector and
/// correlation configs, raw logs, script and a pipeline config.
void write_bundle(const MisuseCase& mc, const std::filesystem::path& dir);

nlohmann::ordered_json script_to_json(const ScenarioScript& s);

/// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace siem::dam
