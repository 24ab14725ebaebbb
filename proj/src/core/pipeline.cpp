#include "pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "dam.hpp"

namespace siem::pipeline {

namespace {

using oj = nlohmann::ordered_json;

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::invalid_config, "cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid_config, p.string() + ": " + e.what());
  }
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::invalid_config, "cannot open " + p.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorKind::io_error, "cannot write " + p.string());
}

void write_json(const fs::path& p, const oj& j) { write_file(p, j.dump(2) + "\n"); }

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

oj counts_json(const std::map<std::string, std::size_t>& m) {
  oj j = oj::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

std::map<std::string, std::size_t> count_findings(const std::vector<reach::Finding>& findings) {
  std::map<std::string, std::size_t> m{{"anomaly", 0}, {"not_enforceable", 0}, {"security_issue", 0}};
  for (const auto& f : findings) ++m[reach::to_string(f.kind)];
  return m;
}

std::vector<policy::AbstractPolicy> load_policies(const fs::path& p) {
  return policy::policies_from_json(read_json(p));
}

policy::SystemDescription load_system(const fs::path& p) {
  return policy::system_from_json(read_json(p));
}

}  // namespace

res::FaultModel faults_from_json(const nlohmann::json& j) {
  res::FaultModel f;
  if (j.is_null()) return f;
  if (!j.is_object()) throw Error(ErrorKind::invalid_config, "faults must map node ids to behaviours");
  for (const auto& [node, b] : j.items()) {
    unsigned id = 0;
    try {
      std::size_t used = 0;
      id = static_cast<unsigned>(std::stoul(node, &used));
      if (used != node.size()) throw std::invalid_argument(node);
    } catch (const std::exception&) {
      throw Error(ErrorKind::invalid_config, "fault node id '" + node + "' is not a number");
    }
    f.nodes[id] = res::behavior_from_string(b.get<std::string>());
  }
  return f;
}

PipelineConfig load_config(const fs::path& file) {
  auto j = read_json(file);
  const auto base = file.parent_path();
  PipelineConfig cfg;
  try {
    cfg.collector = resolve(base, j.at("collector").get<std::string>());
    cfg.rules = resolve(base, j.at("rules").get<std::string>());
    cfg.system = resolve(base, j.at("system").get<std::string>());
    cfg.policies = resolve(base, j.at("policies").get<std::string>());
    if (j.contains("hierarchy") && !j["hierarchy"].is_null())
      cfg.hierarchy = resolve(base, j["hierarchy"].get<std::string>());
    if (auto r = j.find("res"); r != j.end()) {
      cfg.res.n = r->value("n", cfg.res.n);
      cfg.res.k = r->value("k", cfg.res.k);
      cfg.key_bits = r->value("key_bits", cfg.key_bits);
    }
    cfg.faults = faults_from_json(j.value("faults", nlohmann::json()));
    cfg.seed = j.value("seed", cfg.seed);
    cfg.os_entropy = j.value("os_entropy", false);
    cfg.out_dir = resolve(base, j.value("out_dir", std::string("out")));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid_config, file.string() + ": " + e.what());
  }
  cfg.faults.seed = cfg.seed;
  return cfg;
}

void validate(const PipelineConfig& cfg) {
  res::validate(cfg.res);
  res::validate_modulus_bits(cfg.key_bits);
  for (const auto& [node, _] : cfg.faults.nodes)
    if (node < 1 || node > cfg.res.n)
      throw Error(ErrorKind::invalid_config, "fault for node " + std::to_string(node) + " outside 1..n");
  std::vector<fs::path> inputs{cfg.collector, cfg.rules, cfg.system, cfg.policies};
  if (cfg.hierarchy) inputs.push_back(*cfg.hierarchy);
  for (const auto& p : inputs)
    if (!fs::is_regular_file(p)) throw Error(ErrorKind::invalid_config, "missing input " + p.string());
}

CollectSummary collect(const fs::path& collector_config, const fs::path& out) {
  auto cfg = get::collector_config_from_json(read_json(collector_config));
  std::vector<get::RawStream> streams;
  for (const auto& s : cfg.streams) {
    auto path = resolve(collector_config.parent_path(), s.path);
    streams.push_back({s.stream_id, s.grammar, s.layer, read_lines(path)});
  }
  auto r = get::run_collector(cfg.grammars, cfg.probes, streams);

  std::string events;
  for (const auto& e : r.events) events += serialize_event(e);
  write_file(out / "events.jsonl", events);
  std::string quarantine;
  for (const auto& q : r.quarantined) {
    oj j = oj::object();
    j["stream"] = q.stream_id;
    j["line"] = q.line.line_number;
    j["reason"] = q.line.reason;
    j["raw"] = q.line.raw;
    quarantine += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
  }
  write_file(out / "quarantine.jsonl", quarantine);
  return {r.lines_in, r.events.size(), r.events_emitted, r.quarantined.size()};
}

CorrelateSummary correlate(const fs::path& events, const fs::path& rules, const fs::path& out) {
  auto rule_list = corr::rules_from_json(read_json(rules));
  std::ifstream in(events, std::ios::binary);
  if (!in) throw Error(ErrorKind::invalid_config, "cannot open " + events.string());
  auto stream = read_events(in);
  if (!stream.quarantined.empty())
    throw Error(ErrorKind::malformed_event, events.string() + ": line " +
                                                std::to_string(stream.quarantined.front().line_number) +
                                                ": " + stream.quarantined.front().reason);
  auto result = corr::correlate(stream.items, rule_list);
  std::string text;
  CorrelateSummary s;
  s.events = stream.items.size();
  for (const auto& r : rule_list) s.alarms_by_rule[r.rule_id] = 0;
  for (const auto& a : result.alarms) {
    text += serialize_alarm(a);
    ++s.alarms_by_rule[a.rule_id];
  }
  s.alarms = result.alarms.size();
  write_file(out / "alarms.jsonl", text);
  return s;
}

ResolveSummary resolve_conflicts(const fs::path& policies, const fs::path& system,
                                 const std::optional<fs::path>& hierarchy, const fs::path& out) {
  auto pols = load_policies(policies);
  auto sd = load_system(system);
  auto h = hierarchy ? ahp::hierarchy_from_json(read_json(*hierarchy)) : ahp::default_hierarchy();
  auto universe = policy::build_universe(sd, pols);
  auto anomalies = policy::detect_policy_anomalies(pols, universe);
  auto conflicts = policy::detect_conflicts(pols, universe);
  auto by_id = [&](const std::string& id) -> const policy::AbstractPolicy& {
    return *std::find_if(pols.begin(), pols.end(), [&](const auto& p) { return p.policy_id == id; });
  };

  std::set<std::string> dropped;
  oj jan = oj::array();
  for (const auto& a : anomalies) {
    jan.push_back({{"kind", policy::to_string(a.kind)}, {"first", a.first}, {"second", a.second}});
    if (a.kind == policy::AnomalyKind::equivalence) dropped.insert(a.second);
  }
  oj jconf = oj::array();
  for (const auto& c : conflicts) {
    auto r = ahp::resolve(by_id(c.first), by_id(c.second), h);
    const auto& loser = r.chosen_policy_id == c.first ? c.second : c.first;
    // Losing denies are lifted; a losing permit stays and the winning deny
    // carves the overlap out during refinement.
    if (by_id(loser).effect == policy::Effect::deny) dropped.insert(loser);
    oj o = oj::object();
    o["first"] = c.first;
    o["second"] = c.second;
    o["resolution"] = ahp::resolution_to_json(r);
    jconf.push_back(o);
  }

  ResolveSummary s;
  s.anomalies = anomalies.size();
  s.conflicts = conflicts.size();
  s.dropped.assign(dropped.begin(), dropped.end());
  oj eff = oj::array();
  for (const auto& p : pols)
    if (!dropped.count(p.policy_id)) {
      s.effective.push_back(p);
      eff.push_back(p.policy_id);
    }
  oj j = oj::object();
  j["hierarchy"] = ahp::hierarchy_to_json(h);
  j["anomalies"] = jan;
  j["conflicts"] = jconf;
  j["dropped"] = s.dropped;
  j["effective"] = eff;
  write_json(out / "resolutions.json", j);
  return s;
}

ReachSummary reachability(const fs::path& policies, const fs::path& system,
                          const std::optional<fs::path>& resolutions, const fs::path& out,
                          bool react_after) {
  auto pols = load_policies(policies);
  auto sd = load_system(system);
  if (resolutions) {
    auto j = read_json(*resolutions);
    std::set<std::string> dropped;
    for (const auto& d : j.value("dropped", nlohmann::json::array())) dropped.insert(d.get<std::string>());
    std::erase_if(pols, [&](const auto& p) { return dropped.count(p.policy_id) > 0; });
  }
  auto report = reach::run_analysis(pols, sd);
  write_json(out / "findings.json", reach::report_to_json(report));
  auto rem = reach::remediate(report, pols, sd);
  write_json(out / "remediation.json", reach::remediation_to_json(rem));

  ReachSummary s;
  s.findings = count_findings(report.findings);
  s.suggestions = rem.suggestions.size();
  if (react_after) {
    auto reacted = reach::react(sd, rem);
    write_json(out / "system.reacted.json", policy::system_to_json(reacted));
    auto post = reach::run_analysis(pols, reacted);
    write_json(out / "findings_post.json", reach::report_to_json(post));
    s.findings_post = count_findings(post.findings);
    s.total_post = post.findings.size();
  }
  return s;
}

void react(const fs::path& system, const fs::path& remediation, const fs::path& out_system) {
  auto sd = load_system(system);
  auto rem = reach::remediation_from_json(read_json(remediation));
  write_json(out_system, policy::system_to_json(reach::react(sd, rem)));
}

SignSummary res_sign(const fs::path& alarms, const res::ThresholdParams& params, unsigned key_bits,
                     std::uint64_t seed, const res::FaultModel& faults, const fs::path& out,
                     bool os_entropy) {
  res::validate(params);
  res::validate_modulus_bits(key_bits);
  std::ifstream in(alarms, std::ios::binary);
  if (!in) throw Error(ErrorKind::invalid_config, "cannot open " + alarms.string());
  auto stream = read_alarms(in);
  if (!stream.quarantined.empty())
    throw Error(ErrorKind::malformed_event, alarms.string() + ": line " +
                                                std::to_string(stream.quarantined.front().line_number) +
                                                ": " + stream.quarantined.front().reason);
  auto keys = res::dealer_keygen(params, key_bits, seed, os_entropy);
  write_json(out / "res_public.json", res::public_to_json(keys.pub));

  fs::remove(out / "store.res");
  res::RecordStore store(out / "store.res");
  std::string dead;
  SignSummary s;
  for (const auto& a : stream.items) {
    try {
      auto rec = store.append(res::process_alarm(a, keys, faults));
      ++s.stored;
      for (auto n : rec.corrupted_nodes) ++s.flagged[n];
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::quorum_unreachable) throw;
      dead += res::dead_letter_line(a, e.what());
      ++s.dead_letters;
    }
  }
  write_file(out / "dead_letter.jsonl", dead);
  return s;
}

res::AuditReport res_audit(const fs::path& store, const fs::path& public_key, const fs::path& out_report) {
  auto pub = res::public_from_json(read_json(public_key));
  auto rep = res::audit(store, pub);
  write_json(out_report, res::audit_to_json(rep));
  return rep;
}

void dam_sim(const fs::path& out_dir) { dam::write_bundle(dam::misuse_case(), out_dir); }

int run_pipeline(const PipelineConfig& cfg) {
  validate(cfg);
  const auto& out = cfg.out_dir;
  fs::create_directories(out);
  fs::remove(out / "error.json");

  auto stage = [&](const char* name, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      oj err = oj::object();
      err["stage"] = name;
      err["kind"] = to_string(e.kind());
      err["message"] = e.what();
      write_json(out / "error.json", err);
      throw StageFailure(name, e);
    } catch (const std::exception& e) {
      Error wrapped(ErrorKind::io_error, e.what());
      oj err = oj::object();
      err["stage"] = name;
      err["kind"] = to_string(wrapped.kind());
      err["message"] = e.what();
      write_json(out / "error.json", err);
      throw StageFailure(name, wrapped);
    }
  };

  auto c = stage("collect", [&] { return collect(cfg.collector, out); });
  auto k = stage("correlate", [&] { return correlate(out / "events.jsonl", cfg.rules, out); });
  auto sig = stage("res-sign", [&] {
    return res_sign(out / "alarms.jsonl", cfg.res, cfg.key_bits, cfg.seed, cfg.faults, out, cfg.os_entropy);
  });
  auto audit = stage("res-audit", [&] {
    return res_audit(out / "store.res", out / "res_public.json", out / "audit.json");
  });
  auto rs = stage("resolve-conflicts",
                  [&] { return resolve_conflicts(cfg.policies, cfg.system, cfg.hierarchy, out); });
  auto rc = stage("reachability", [&] {
    return reachability(cfg.policies, cfg.system, out / "resolutions.json", out, true);
  });

  const int code = (rc.total_post == 0 && audit.ok()) ? kExitOk : kExitFindings;

  oj s = oj::object();
  s["collect"] = {{"lines_in", c.lines_in},
                  {"events", c.events},
                  {"probe_events", c.emitted},
                  {"quarantined", c.quarantined}};
  s["correlate"] = {{"events", k.events}, {"alarms", k.alarms}, {"alarms_by_rule", counts_json(k.alarms_by_rule)}};
  oj flagged = oj::object();
  for (const auto& [n, count] : sig.flagged) flagged[std::to_string(n)] = count;
  s["res"] = {{"n", cfg.res.n},
              {"k", cfg.res.k},
              {"key_bits", cfg.key_bits},
              {"stored", sig.stored},
              {"dead_letters", sig.dead_letters},
              {"flagged_nodes", flagged},
              {"audit_records", audit.records},
              {"audit_failures", audit.failures.size()}};
  s["policies"] = {{"anomalies", rs.anomalies}, {"conflicts", rs.conflicts}, {"dropped", rs.dropped}};
  s["reachability"] = {{"pre", counts_json(rc.findings)},
                       {"suggestions", rc.suggestions},
                       {"post", counts_json(rc.findings_post)}};
  s["seed"] = cfg.seed;
  if (cfg.os_entropy) s["os_entropy"] = true;
  s["exit_code"] = code;
  write_json(out / "summary.json", s);
  return code;
}

}  // namespace siem::pipeline
