#include "dam.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "ahp.hpp"
#include "error.hpp"

namespace siem::dam {

namespace {

constexpr std::int64_t kScenarioStart = 1704067200000;  // 2024-01-01T00:00:00Z
constexpr const char* kVisIp = "192.168.1.10";
constexpr const char* kMgmtPort = "2222";

using oj = nlohmann::ordered_json;

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorKind::io_error, "cannot write " + p.string());
}

std::string host_ip(const policy::SystemDescription& sd, const std::string& id) {
  const auto* h = sd.find_host(id);
  if (!h) throw Error(ErrorKind::invalid_config, "script references unknown host '" + id + "'");
  return policy::format_ipv4(h->ips.front());
}

std::string sensor_line(const NormalizedEvent& e) {
  std::string s = format_iso8601_ms(e.timestamp) + " " + std::string(kFlowSensor) + " " +
                  e.source->ip + " " + e.event_type;
  for (const char* k : {"Q", "P", "rpm", "phase"})
    if (auto it = e.attributes.find(k); it != e.attributes.end()) s += " " + it->first + "=" + it->second;
  return s;
}

oj grammar(std::string name, std::vector<std::pair<std::string, std::string>> tokens,
           std::vector<std::string> line, std::map<std::string, std::string> bindings,
           std::map<std::string, std::string> defaults) {
  oj g = oj::object();
  g["name"] = std::move(name);
  auto t = oj::array();
  for (auto& [n, p] : tokens) t.push_back({{"name", n}, {"pattern", p}});
  g["tokens"] = t;
  g["line"] = line;
  g["bindings"] = bindings;
  g["defaults"] = defaults;
  return g;
}

oj collector_document() {
  const std::string ts = R"((\d{4}-\d\d-\d\dT\d\d:\d\d:\d\d(?:\.\d{3})?Z))";
  const std::string ip = R"((\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}))";
  oj doc = oj::object();
  auto grammars = oj::array();
  grammars.push_back(grammar(
      "sensor_log",
      {{"ts", ts}, {"node", R"(([a-z_]+))"}, {"ip", ip},
       {"kind", R"((flow_rate_reading|turbine_emergency))"}, {"kv", R"(([A-Za-z_]+)=(\S+))"}},
      {"ts", "node", "ip", "kind", "kv*"},
      {{"ts", "timestamp"}, {"node", "attributes.node"}, {"ip", "source.ip"}, {"kind", "event_type"}},
      {{"severity", "1"}}));
  grammars.push_back(grammar(
      "auth_log",
      {{"ts", ts}, {"proc", R"(([a-z]+)\[\d+\]:)"},
       {"kind", R"((auth_failure|auth_success|firmware_write))"}, {"user", R"(user=(\S+))"},
       {"src", "src=" + ip}, {"dst", "dst=" + ip}, {"dport", R"(dport=(\d+))"},
       {"kv", R"(([a-z_]+)=(\S+))"}},
      {"ts", "proc", "kind", "user?", "src", "dst", "dport?", "kv*"},
      {{"ts", "timestamp"}, {"proc", "attributes.process"}, {"kind", "event_type"},
       {"user", "attributes.user"}, {"src", "source.ip"}, {"dst", "destination.ip"},
       {"dport", "destination.port"}},
      {{"severity", "3"}}));
  doc["grammars"] = grammars;

  oj probe = oj::object();
  probe["id"] = "flow_probe";
  probe["states"] = {"steady", "suspicious"};
  probe["initial"] = "steady";
  oj up = oj::object();
  up["from"] = "steady";
  up["to"] = "suspicious";
  up["guard"] = {{"event_type", "flow_rate_reading"},
                 {"rates", oj::array({{{"field", "attributes.Q"}, {"gt", 20}}})}};
  up["emit"] = {{"event_type", "flow_rate_anomaly"},
                {"layer", "physical_sensor"},
                {"severity", 8},
                {"attributes", {{"reason", "flow ramp above 20 m3/s per s"}}}};
  oj down = oj::object();
  down["from"] = "suspicious";
  down["to"] = "steady";
  down["guard"] = {{"event_type", "flow_rate_reading"},
                   {"conditions", oj::array({{{"field", "attributes.Q"}, {"op", "<="}, {"value", 60}}})}};
  probe["transitions"] = oj::array({up, down});
  doc["probes"] = oj::array({probe});

  doc["streams"] = oj::array(
      {{{"id", "sensors"}, {"grammar", "sensor_log"}, {"layer", "physical_sensor"}, {"path", "logs/sensors.log"}},
       {{"id", "auth"}, {"grammar", "auth_log"}, {"layer", "logical_access"}, {"path", "logs/auth.log"}}});
  return doc;
}

oj rule(std::string id, std::string type, std::vector<std::string> group_by, int threshold,
        std::int64_t window, std::string description, int severity) {
  oj r = oj::object();
  r["id"] = std::move(id);
  r["match"] = {{"event_type", std::move(type)}};
  r["group_by"] = group_by;
  r["threshold"] = threshold;
  r["window_ms"] = window;
  r["alarm"] = {{"description", std::move(description)}, {"severity", severity}};
  return r;
}

oj rules_document() {
  auto rules = oj::array();
  rules.push_back(rule("brute_force", "auth_failure", {"source.ip", "destination.ip"}, 5, 60000,
                       "repeated login failures from ${source.ip} on ${destination.ip}", 7));
  rules.push_back(rule("firmware_write", "firmware_write", {"source.ip", "destination.ip"}, 1, 60000,
                       "firmware written on ${destination.ip} from ${source.ip}", 9));
  rules.push_back(rule("flow_anomaly", "flow_rate_anomaly", {"source.ip"}, 1, 60000,
                       "abnormal flow ramp reported by ${source.ip}", 8));
  rules.push_back(rule("turbine_emergency", "turbine_emergency", {"source.ip"}, 1, 60000,
                       "turbine emergency, power ${attributes.P} W", 10));
  oj doc = oj::object();
  doc["rules"] = rules;
  return doc;
}

policy::Host host(std::string id, std::string ip, std::string role, std::string org,
                  std::string subnet) {
  policy::Host h;
  h.id = std::move(id);
  h.ips = {*policy::parse_ipv4(ip)};
  h.role = std::move(role);
  h.organization = org;
  h.owner = std::move(org);
  h.subnet = std::move(subnet);
  h.capabilities = {std::string(policy::kEndpoint)};
  return h;
}

policy::FilteringRule fw_rule(const char* src, const char* dst, std::vector<std::uint16_t> ports,
                              policy::RuleAction action) {
  nlohmann::json j = {{"src_ip", src}, {"dst_ip", dst}, {"proto", "TCP"},
                      {"action", action == policy::RuleAction::permit ? "permit" : "deny"}};
  auto r = policy::rule_from_json(j);
  r.dst_port = ports.empty() ? policy::PortSet::any() : policy::PortSet::list(ports);
  if (ports.empty()) r.proto = policy::Protocol::ANY;
  return r;
}

policy::SystemDescription misuse_system() {
  policy::SystemDescription sd;
  sd.hosts.push_back(host("ctrl_station", "192.168.1.20", "operator", "dam-ops", "ops"));
  sd.hosts.push_back(host("flow_sensor", "192.168.10.11", "", "", "field"));
  sd.hosts.push_back(host("rpm_sensor", "192.168.10.12", "", "", "field"));
  sd.hosts.push_back(host("vis_station", kVisIp, "viewer", "dam-ops", "ops"));
  sd.hosts[1].owner = sd.hosts[2].owner = "dam-ops";
  sd.devices.push_back({"fw1", {std::string(policy::kFiltering), std::string(policy::kRouting)}, ""});
  sd.devices.push_back({"sw_field", {std::string(policy::kRouting)}, "field"});
  sd.devices.push_back({"sw_ops", {std::string(policy::kRouting)}, "ops"});
  for (const char* s : {"flow_sensor", "rpm_sensor"}) {
    sd.services.push_back({s, "data", policy::Protocol::TCP, {502}});
    sd.services.push_back({s, "mgmt", policy::Protocol::TCP, {2222}});
  }
  sd.links = {{"vis_station", "sw_ops"}, {"ctrl_station", "sw_ops"}, {"sw_ops", "fw1"},
              {"fw1", "sw_field"},       {"sw_field", "flow_sensor"}, {"sw_field", "rpm_sensor"}};
  using policy::RuleAction;
  sd.firewalls["fw1"] = {
      fw_rule("192.168.1.0/24", "192.168.10.0/24", {502}, RuleAction::permit),
      fw_rule("192.168.1.20", "192.168.10.0/24", {2222}, RuleAction::permit),
      // The misconfiguration: the viewer may reach the sensor management port.
      fw_rule(kVisIp, "192.168.10.11", {2222}, RuleAction::permit),
      fw_rule("*", "*", {}, RuleAction::deny),
  };
  policy::validate(sd);
  return sd;
}

std::vector<policy::AbstractPolicy> misuse_policies() {
  using policy::Effect;
  return {
      {"p_vis_data", {{"ID", "vis_station"}}, "reach", {{"Type", "data"}}, {}, Effect::permit},
      {"p_ops_data", {{"Role", "operator"}}, "reach", {{"Type", "data"}}, {}, Effect::permit},
      {"p_ctrl_mgmt", {{"ID", "ctrl_station"}, {"Role", "operator"}}, "reach", {{"Type", "mgmt"}}, {},
       Effect::permit},
      {"p_deny_mgmt", {{"Organization", "dam-ops"}}, "reach", {{"Type", "mgmt"}}, {}, Effect::deny},
  };
}

ScenarioScript misuse_script() {
  ScenarioScript s;
  s.start_ms = kScenarioStart;
  s.duration_ms = 30000;
  s.dt_ms = 1000;
  for (int i = 5; i <= 9; ++i)
    s.commands.push_back({kScenarioStart + i * 1000, CommandKind::login, 0, "vis_station", "admin", false});
  s.commands.push_back({kScenarioStart + 10000, CommandKind::login, 0, "vis_station", "admin", true});
  s.commands.push_back({kScenarioStart + 12000, CommandKind::firmware_write, 0, "vis_station", "admin", true});
  s.commands.push_back({kScenarioStart + 15000, CommandKind::set_Q, 200, "vis_station", "", true});
  return s;
}

}  // namespace

void validate(const DamState& s) {
  auto bad = [](const char* what) { throw Error(ErrorKind::invalid_params, what); };
  if (!(s.eta > 0 && s.eta <= 1)) bad("eta must lie in (0, 1]");
  for (double v : {s.delta_h, s.Q, s.rho, s.g, s.rpm, s.rpm_limit, s.power_limit, s.Q_target,
                   s.max_ramp, s.rpm_per_watt})
    if (!(v >= 0) || !std::isfinite(v)) bad("dam quantities must be finite and non-negative");
}

double power(const DamState& s) noexcept { return s.rho * s.eta * s.g * s.delta_h * s.Q; }

double critical_flow(const DamState& s) noexcept {
  return s.power_limit / (s.rho * s.eta * s.g * s.delta_h);
}

std::string format_number(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

NormalizedEvent reading(const DamState& s, std::uint64_t seq) {
  NormalizedEvent e;
  e.event_id = "dam-" + std::to_string(seq);
  e.timestamp = s.t_ms;
  e.layer = Layer::physical_sensor;
  e.event_type = "flow_rate_reading";
  e.source = Endpoint{std::string(kFlowSensorIp), std::nullopt};
  e.severity = 1;
  e.attributes["Q"] = format_number(s.Q);
  e.attributes["P"] = format_number(power(s));
  e.attributes["rpm"] = format_number(s.rpm);
  if (s.destroyed) e.attributes["phase"] = "post-failure";
  return e;
}

StepResult step(const DamState& s, const std::optional<Command>& command, double dt) {
  if (!(dt > 0)) throw Error(ErrorKind::invalid_params, "dt must be positive");
  StepResult out{s, {}};
  auto& n = out.state;
  n.t_ms = s.t_ms + static_cast<std::int64_t>(std::llround(dt * 1000.0));
  std::uint64_t seq = static_cast<std::uint64_t>(n.t_ms);
  if (s.destroyed) {
    out.events.push_back(reading(n, seq));
    return out;
  }
  if (command && command->kind == CommandKind::set_Q) n.Q_target = std::max(0.0, command->value);
  const double max_delta = n.max_ramp * dt;
  if (n.Q_target > n.Q) n.Q = std::min(n.Q_target, n.Q + max_delta);
  else n.Q = std::max(n.Q_target, n.Q - max_delta);
  n.rpm = n.rpm_per_watt * power(n);
  out.events.push_back(reading(n, seq));
  if (power(n) > n.power_limit || n.rpm > n.rpm_limit) {
    auto e = reading(n, seq);
    e.event_id += "-emergency";
    e.event_type = "turbine_emergency";
    e.severity = 10;
    out.events.push_back(std::move(e));
    n.destroyed = true;
  }
  return out;
}

MisuseCase misuse_case() {
  MisuseCase mc;
  mc.system = misuse_system();
  mc.policies = misuse_policies();
  mc.script = misuse_script();

  DamState st;
  st.t_ms = mc.script.start_ms;
  st.rpm = st.rpm_per_watt * power(st);
  auto& sensors = mc.logs["sensors"];
  auto& auth = mc.logs["auth"];
  auth.push_back("-- log rotated --");

  mc.physical_events.push_back(reading(st, 0));
  std::size_t next = 0;
  const double dt = static_cast<double>(mc.script.dt_ms) / 1000.0;
  const auto& cmds = mc.script.commands;
  while (st.t_ms < mc.script.start_ms + mc.script.duration_ms) {
    std::optional<Command> physical;
    for (; next < cmds.size() && cmds[next].at_ms < st.t_ms + mc.script.dt_ms; ++next) {
      const auto& c = cmds[next];
      const auto ts = format_iso8601_ms(c.at_ms);
      const auto src = host_ip(mc.system, c.host);
      switch (c.kind) {
        case CommandKind::set_Q: physical = c; break;
        case CommandKind::login:
          auth.push_back(ts + " sshd[4121]: " + (c.success ? "auth_success" : "auth_failure") +
                         " user=" + c.user + " src=" + src + " dst=" + std::string(kFlowSensorIp) +
                         " dport=" + kMgmtPort);
          break;
        case CommandKind::firmware_write:
          auth.push_back(ts + " fwupd[77]: firmware_write user=" + c.user + " src=" + src +
                         " dst=" + std::string(kFlowSensorIp) + " dport=" + kMgmtPort +
                         " image=flow-fw-2.1.bin");
          break;
      }
    }
    auto r = step(st, physical, dt);
    st = r.state;
    mc.physical_events.insert(mc.physical_events.end(), r.events.begin(), r.events.end());
  }
  for (const auto& e : mc.physical_events) sensors.push_back(sensor_line(e));
  return mc;
}

nlohmann::ordered_json script_to_json(const ScenarioScript& s) {
  oj j = oj::object();
  j["start"] = format_iso8601_ms(s.start_ms);
  j["duration_ms"] = s.duration_ms;
  j["dt_ms"] = s.dt_ms;
  auto cmds = oj::array();
  for (const auto& c : s.commands) {
    oj o = oj::object();
    o["at"] = format_iso8601_ms(c.at_ms);
    switch (c.kind) {
      case CommandKind::set_Q:
        o["command"] = "set_Q";
        o["value"] = c.value;
        break;
      case CommandKind::login:
        o["command"] = "login";
        o["host"] = c.host;
        o["user"] = c.user;
        o["success"] = c.success;
        break;
      case CommandKind::firmware_write:
        o["command"] = "firmware_write";
        o["host"] = c.host;
        o["user"] = c.user;
        break;
    }
    cmds.push_back(o);
  }
  j["commands"] = cmds;
  return j;
}

void write_bundle(const MisuseCase& mc, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "logs");
  auto dump = [&](const char* name, const oj& j) { write_text(dir / name, j.dump(2) + "\n"); };
  dump("system.json", policy::system_to_json(mc.system));
  auto pols = oj::array();
  for (const auto& p : mc.policies) pols.push_back(policy::policy_to_json(p));
  dump("policies.json", oj{{"policies", pols}});
  dump("hierarchy.json", ahp::hierarchy_to_json(ahp::default_hierarchy()));
  dump("collector.json", collector_document());
  dump("rules.json", rules_document());
  dump("script.json", script_to_json(mc.script));

  oj cfg = oj::object();
  cfg["collector"] = "collector.json";
  cfg["rules"] = "rules.json";
  cfg["system"] = "system.json";
  cfg["policies"] = "policies.json";
  cfg["hierarchy"] = "hierarchy.json";
  cfg["res"] = {{"n", 4}, {"k", 3}, {"key_bits", 512}};
  cfg["faults"] = {{"2", "corrupt"}};
  cfg["seed"] = 20240101;
  cfg["out_dir"] = "out";
  dump("pipeline.json", cfg);

  for (const auto& [stream, lines] : mc.logs) {
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    write_text(dir / "logs" / (stream + ".log"), text);
  }
}

}  // namespace siem::dam
