#include "reachability.hpp"

#include <algorithm>
#include <functional>
#include <set>

#include "error.hpp"

namespace siem::reach {

using policy::AbstractPolicy;
using policy::Ipv4Prefix;
using policy::PortSet;
using policy::RuleAction;

std::optional<std::size_t> TopologyGraph::index_of(std::string_view id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                             [](const TopologyNode& n, std::string_view v) { return n.id < v; });
  if (it == nodes.end() || it->id != id) return std::nullopt;
  return static_cast<std::size_t>(it - nodes.begin());
}

TopologyGraph build_topology(const SystemDescription& sd) {
  policy::validate(sd);
  TopologyGraph g;
  for (const auto& h : sd.hosts)
    g.nodes.push_back({h.id, true, h.capabilities.count(std::string(policy::kFiltering)) > 0, h.ips});
  for (const auto& d : sd.devices)
    g.nodes.push_back({d.id, false, d.capabilities.count(std::string(policy::kFiltering)) > 0, {}});
  std::sort(g.nodes.begin(), g.nodes.end(),
            [](const TopologyNode& a, const TopologyNode& b) { return a.id < b.id; });
  g.adj.resize(g.nodes.size());
  for (const auto& [a, b] : sd.links) {
    auto ia = *g.index_of(a);
    auto ib = *g.index_of(b);
    g.adj[ia].push_back(ib);
    g.adj[ib].push_back(ia);
  }
  for (auto& n : g.adj) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return g;
}

std::vector<std::vector<std::size_t>> simple_paths(const TopologyGraph& g, std::size_t from,
                                                   std::size_t to, std::size_t limit) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> path{from};
  std::vector<bool> on_path(g.nodes.size(), false);
  on_path[from] = true;
  std::function<void(std::size_t)> dfs = [&](std::size_t cur) {
    if (cur == to) {
      if (out.size() == limit)
        throw Error(ErrorKind::path_limit_exceeded,
                    "more than " + std::to_string(limit) + " simple paths between " +
                        g.nodes[from].id + " and " + g.nodes[to].id);
      out.push_back(path);
      return;
    }
    for (auto nb : g.adj[cur]) {
      if (on_path[nb]) continue;
      on_path[nb] = true;
      path.push_back(nb);
      dfs(nb);
      path.pop_back();
      on_path[nb] = false;
    }
  };
  dfs(from);
  return out;
}

PacketUniverse packet_universe(const SystemDescription& sd) {
  PacketUniverse u;
  for (const auto& h : sd.hosts)
    for (auto ip : h.ips)
      for (auto port : sd.client_ports) u.sources.push_back({ip, port});
  for (const auto& s : sd.services)
    if (const auto* h = sd.find_host(s.host_id))
      for (auto ip : h->ips)
        for (auto port : s.ports) u.destinations.push_back({ip, port, s.proto});
  std::sort(u.sources.begin(), u.sources.end());
  u.sources.erase(std::unique(u.sources.begin(), u.sources.end()), u.sources.end());
  std::sort(u.destinations.begin(), u.destinations.end());
  u.destinations.erase(std::unique(u.destinations.begin(), u.destinations.end()),
                       u.destinations.end());
  return u;
}

policy::Packet packet(const SourceKey& s, const DestKey& d) {
  return {s.ip, s.port, d.ip, d.port, d.proto};
}

std::optional<std::size_t> first_match(const std::vector<FilteringRule>& rules,
                                       const policy::Packet& p) {
  for (std::size_t i = 0; i < rules.size(); ++i)
    if (policy::rule_matches(rules[i], p)) return i;
  return std::nullopt;
}

bool permits(const std::vector<FilteringRule>& rules, const policy::Packet& p) {
  auto i = first_match(rules, p);
  return i && rules[*i].action == RuleAction::permit;
}

const char* to_string(FindingKind kind) noexcept {
  switch (kind) {
    case FindingKind::anomaly: return "anomaly";
    case FindingKind::security_issue: return "security_issue";
    case FindingKind::not_enforceable: return "not_enforceable";
  }
  return "?";
}

std::string format_source(const SourceKey& s) {
  return policy::format_ipv4(s.ip) + ":" + std::to_string(s.port);
}

std::string format_destination(const DestKey& d) {
  return policy::format_ipv4(d.ip) + ":" + std::to_string(d.port) + "/" + policy::to_string(d.proto);
}

namespace {

FilteringRule concrete_rule(const SourceKey& s, const DestKey& d, RuleAction action) {
  return {Ipv4Prefix::host(s.ip), PortSet::single(s.port), Ipv4Prefix::host(d.ip),
          PortSet::single(d.port), d.proto, action};
}

SourceKey source_of(const FilteringRule& r) { return {r.src_ip.addr, r.src_port.ranges.at(0).first}; }

DestKey dest_of(const FilteringRule& r) {
  return {r.dst_ip.addr, r.dst_port.ranges.at(0).first, r.proto};
}

void push_unique(std::vector<FilteringRule>& list, FilteringRule r) {
  if (std::find(list.begin(), list.end(), r) == list.end()) list.push_back(std::move(r));
}

std::vector<std::string> subject_hosts(const AbstractPolicy& p, const policy::Universe& u) {
  std::set<std::string> hosts;
  for (const auto& s : u.subjects)
    if (policy::entity_matches(p.subject, s.attributes)) hosts.insert(s.host_id);
  return {hosts.begin(), hosts.end()};
}

std::vector<std::size_t> object_services(const AbstractPolicy& p, const policy::Universe& u) {
  std::vector<std::size_t> out;
  for (const auto& o : u.objects)
    if (policy::entity_matches(p.object, o.attributes)) out.push_back(o.service);
  return out;
}

void check_endpoints(const AbstractPolicy& p, const policy::Universe& u) {
  auto declared = [](const auto& entities, const char* attr, const std::string& value) {
    return std::any_of(entities.begin(), entities.end(), [&](const auto& e) {
      auto it = e.attributes.find(attr);
      return it != e.attributes.end() && it->second == value;
    });
  };
  if (auto it = p.subject.find("ID"); it != p.subject.end() && !declared(u.subjects, "ID", it->second))
    throw Error(ErrorKind::unknown_endpoint,
                "policy '" + p.policy_id + "': undeclared subject '" + it->second + "'");
  for (const char* attr : {"ID", "Type"})
    if (auto it = p.object.find(attr); it != p.object.end() && !declared(u.objects, attr, it->second))
      throw Error(ErrorKind::unknown_endpoint, "policy '" + p.policy_id + "': no service with " +
                                                   attr + " '" + it->second + "'");
}

std::string join_path(const std::vector<std::string>& path) {
  std::string s;
  for (const auto& n : path) s += (s.empty() ? "" : " > ") + n;
  return s;
}

}  // namespace

Refinement refine(const std::vector<AbstractPolicy>& policies, const TopologyGraph& g,
                  const SystemDescription& sd) {
  Refinement out;
  for (const auto& n : g.nodes)
    if (n.filtering) out.generated[n.id];

  std::vector<AbstractPolicy> norm;
  for (const auto& p : policies) norm.push_back(policy::normalize(p));
  auto u = policy::build_universe(sd, norm);

  std::set<std::pair<std::string, std::size_t>> denied;
  for (const auto& p : norm) {
    if (p.action != policy::kReach) continue;
    check_endpoints(p, u);
    if (p.effect != policy::Effect::deny) continue;
    for (const auto& h : subject_hosts(p, u))
      for (auto s : object_services(p, u)) denied.emplace(h, s);
  }

  std::set<std::pair<std::string, std::size_t>> done;
  for (const auto& p : norm) {
    if (p.action != policy::kReach || p.effect != policy::Effect::permit) continue;
    for (const auto& subj : subject_hosts(p, u))
      for (auto si : object_services(p, u)) {
        const auto& svc = sd.services[si];
        std::pair<std::string, std::size_t> key{subj, si};
        if (subj == svc.host_id || denied.count(key) || !done.insert(key).second) continue;
        auto from = g.index_of(subj);
        auto to = g.index_of(svc.host_id);
        if (!from || !to)
          throw Error(ErrorKind::unknown_endpoint, "policy '" + p.policy_id + "': endpoint not in topology");
        for (const auto& path : simple_paths(g, *from, *to, sd.path_limit)) {
          bool covered = false;
          for (auto n : path) {
            const auto& node = g.nodes[n];
            if (!node.filtering) continue;
            covered = true;
            auto& rules = out.generated[node.id];
            for (auto sip : g.nodes[*from].ips)
              for (auto dip : g.nodes[*to].ips)
                push_unique(rules, {Ipv4Prefix::host(sip), PortSet::any(), Ipv4Prefix::host(dip),
                                    PortSet::list(svc.ports), svc.proto, RuleAction::permit});
          }
          if (covered) continue;
          Finding f;
          f.kind = FindingKind::not_enforceable;
          f.policy_id = p.policy_id;
          f.subject = subj;
          f.object = svc.host_id;
          for (auto n : path) f.path.push_back(g.nodes[n].id);
          f.detail = "policy " + p.policy_id + " (" + subj + " reach " + svc.host_id + ":" +
                     svc.name + ") crosses no filtering node on path " + join_path(f.path);
          out.not_enforceable.push_back(std::move(f));
        }
      }
  }
  return out;
}

std::vector<FilteringRule> expand(const std::vector<FilteringRule>& rules,
                                  const SystemDescription& sd) {
  std::vector<FilteringRule> out;
  if (rules.empty()) return out;
  auto u = packet_universe(sd);
  for (const auto& s : u.sources)
    for (const auto& d : u.destinations)
      if (permits(rules, packet(s, d))) out.push_back(concrete_rule(s, d, RuleAction::permit));
  return out;
}

Composition compose(const std::vector<FilteringRule>& generated,
                    const std::vector<FilteringRule>& deployed, const std::string& firewall) {
  std::set<SourceKey> rows;
  std::set<DestKey> cols;
  std::set<std::pair<SourceKey, DestKey>> g_cells, d_cells;
  auto scan = [&](const std::vector<FilteringRule>& rules, auto& cells) {
    for (const auto& r : rules) {
      auto s = source_of(r);
      auto d = dest_of(r);
      rows.insert(s);
      cols.insert(d);
      if (r.action == RuleAction::permit) cells.emplace(s, d);
    }
  };
  scan(generated, g_cells);
  scan(deployed, d_cells);

  Composition c;
  c.firewall = firewall;
  for (auto* m : {&c.generated, &c.deployed}) {
    m->rows.assign(rows.begin(), rows.end());
    m->cols.assign(cols.begin(), cols.end());
  }
  auto fill = [&](ReachabilityMatrix& m, const auto& cells) {
    m.cells.assign(m.rows.size(), std::vector<int>(m.cols.size(), 0));
    for (std::size_t i = 0; i < m.rows.size(); ++i)
      for (std::size_t j = 0; j < m.cols.size(); ++j)
        m.cells[i][j] = cells.count({m.rows[i], m.cols[j]}) ? 1 : 0;
  };
  fill(c.generated, g_cells);
  fill(c.deployed, d_cells);
  return c;
}

Analysis analyze(const ReachabilityMatrix& generated, const ReachabilityMatrix& deployed,
                 const std::string& firewall) {
  if (generated.rows != deployed.rows || generated.cols != deployed.cols ||
      generated.cells.size() != deployed.cells.size())
    throw Error(ErrorKind::dimension_mismatch,
                "reachability matrices of '" + firewall + "' differ in shape or ordering");
  Analysis a;
  a.delta.rows = generated.rows;
  a.delta.cols = generated.cols;
  a.delta.cells.assign(generated.rows.size(), std::vector<int>(generated.cols.size(), 0));
  for (std::size_t i = 0; i < generated.rows.size(); ++i) {
    if (generated.cells[i].size() != generated.cols.size() ||
        deployed.cells[i].size() != generated.cols.size())
      throw Error(ErrorKind::dimension_mismatch, "ragged reachability matrix for '" + firewall + "'");
    for (std::size_t j = 0; j < generated.cols.size(); ++j) {
      int v = generated.cells[i][j] - deployed.cells[i][j];
      a.delta.cells[i][j] = v;
      if (v == 0) continue;
      Finding f;
      f.kind = v > 0 ? FindingKind::anomaly : FindingKind::security_issue;
      f.firewall = firewall;
      f.source = generated.rows[i];
      f.destination = generated.cols[j];
      f.detail = firewall + (v > 0 ? " drops policy traffic " : " permits prohibited traffic ") +
                 format_source(generated.rows[i]) + " -> " + format_destination(generated.cols[j]);
      a.findings.push_back(std::move(f));
    }
  }
  return a;
}

Report run_analysis(const std::vector<AbstractPolicy>& policies, const SystemDescription& sd) {
  Report r;
  auto g = build_topology(sd);
  r.refinement = refine(policies, g, sd);
  r.findings = r.refinement.not_enforceable;
  static const std::vector<FilteringRule> none;
  for (const auto& fw : sd.firewall_nodes()) {
    auto dep = sd.firewalls.find(fw);
    FirewallReport fr;
    fr.composition = compose(expand(r.refinement.generated.at(fw), sd),
                             expand(dep == sd.firewalls.end() ? none : dep->second, sd), fw);
    fr.analysis = analyze(fr.composition.generated, fr.composition.deployed, fw);
    r.findings.insert(r.findings.end(), fr.analysis.findings.begin(), fr.analysis.findings.end());
    r.firewalls.push_back(std::move(fr));
  }
  return r;
}

const char* to_string(SuggestionKind kind) noexcept {
  switch (kind) {
    case SuggestionKind::add_rule: return "add_rule";
    case SuggestionKind::remove_rule: return "remove_rule";
    case SuggestionKind::install_filtering: return "install_filtering";
  }
  return "?";
}

namespace {

void add_capability(SystemDescription& sd, const std::string& node) {
  for (auto& h : sd.hosts)
    if (h.id == node) {
      h.capabilities.insert(std::string(policy::kFiltering));
      return;
    }
  for (auto& d : sd.devices)
    if (d.id == node) {
      d.capabilities.insert(std::string(policy::kFiltering));
      return;
    }
  throw Error(ErrorKind::stale_remediation, "no node '" + node + "' to install filtering on");
}

}  // namespace

Remediation remediate(const Report& report, const std::vector<AbstractPolicy>& policies,
                      const SystemDescription& sd) {
  Remediation out;

  // Uncovered paths: filtering at the node nearest the object.
  std::vector<std::string> installs;
  for (const auto& f : report.refinement.not_enforceable) {
    const auto& node = f.path.size() > 2 ? f.path[f.path.size() - 2] : f.path.back();
    if (std::find(installs.begin(), installs.end(), node) != installs.end()) continue;
    installs.push_back(node);
    out.suggestions.push_back({SuggestionKind::install_filtering, node, std::nullopt, std::nullopt,
                               false, "enforce " + f.policy_id + " on path " + join_path(f.path)});
  }
  if (!installs.empty()) {
    auto hypo = sd;
    for (const auto& n : installs) add_capability(hypo, n);
    auto refined = refine(policies, build_topology(hypo), hypo);
    for (const auto& n : installs)
      for (const auto& r : refined.generated.at(n))
        out.suggestions.push_back({SuggestionKind::add_rule, n, r, std::nullopt, false,
                                   "generated rule for new filtering node " + n});
  }

  auto universe = packet_universe(sd);
  for (const auto& fr : report.firewalls) {
    const auto& fw = fr.composition.firewall;
    std::set<std::pair<SourceKey, DestKey>> allowed;
    const auto& mg = fr.composition.generated;
    for (std::size_t i = 0; i < mg.rows.size(); ++i)
      for (std::size_t j = 0; j < mg.cols.size(); ++j)
        if (mg.cells[i][j]) allowed.emplace(mg.rows[i], mg.cols[j]);

    std::vector<FilteringRule> working;
    std::vector<std::optional<std::size_t>> origin;
    if (auto it = sd.firewalls.find(fw); it != sd.firewalls.end()) {
      working = it->second;
      for (std::size_t i = 0; i < working.size(); ++i) origin.emplace_back(i);
    }
    auto insert_top = [&](FilteringRule r, std::string why) {
      working.insert(working.begin(), r);
      origin.insert(origin.begin(), std::nullopt);
      out.suggestions.push_back({SuggestionKind::add_rule, fw, std::move(r), std::nullopt, true,
                                 std::move(why)});
    };
    // Removing rule `idx` only changes packets it matches first; safe when
    // none of them is policy traffic.
    auto removable = [&](std::size_t idx) {
      for (const auto& s : universe.sources)
        for (const auto& d : universe.destinations) {
          auto fm = first_match(working, packet(s, d));
          if (fm && *fm == idx && allowed.count({s, d})) return false;
        }
      return true;
    };

    for (const auto& f : fr.analysis.findings) {
      if (f.kind != FindingKind::security_issue) continue;
      auto p = packet(*f.source, *f.destination);
      while (true) {
        auto idx = first_match(working, p);
        if (!idx || working[*idx].action == RuleAction::deny) break;
        if (origin[*idx] && removable(*idx)) {
          out.suggestions.push_back({SuggestionKind::remove_rule, fw, working[*idx], origin[*idx],
                                     false, f.detail});
          working.erase(working.begin() + static_cast<std::ptrdiff_t>(*idx));
          origin.erase(origin.begin() + static_cast<std::ptrdiff_t>(*idx));
          continue;
        }
        insert_top(concrete_rule(*f.source, *f.destination, RuleAction::deny), f.detail);
        break;
      }
    }
    for (const auto& f : fr.analysis.findings)
      if (f.kind == FindingKind::anomaly)
        insert_top(concrete_rule(*f.source, *f.destination, RuleAction::permit), f.detail);
  }
  return out;
}

SystemDescription react(const SystemDescription& sd, const Remediation& remediation) {
  auto out = sd;
  for (const auto& s : remediation.suggestions)
    if (s.kind == SuggestionKind::install_filtering) add_capability(out, s.node);

  std::map<std::string, std::vector<std::size_t>> removals;
  for (const auto& s : remediation.suggestions) {
    if (s.kind != SuggestionKind::remove_rule) continue;
    auto it = out.firewalls.find(s.node);
    if (it == out.firewalls.end() || !s.index || !s.rule || *s.index >= it->second.size() ||
        it->second[*s.index] != *s.rule)
      throw Error(ErrorKind::stale_remediation,
                  "rule to remove is not deployed on '" + s.node + "'" +
                      (s.rule ? ": " + policy::describe(*s.rule) : std::string{}));
    removals[s.node].push_back(*s.index);
  }
  for (auto& [fw, idx] : removals) {
    std::sort(idx.rbegin(), idx.rend());
    if (std::adjacent_find(idx.begin(), idx.end()) != idx.end())
      throw Error(ErrorKind::stale_remediation, "rule removed twice on '" + fw + "'");
    auto& list = out.firewalls[fw];
    for (auto i : idx) list.erase(list.begin() + static_cast<std::ptrdiff_t>(i));
  }

  for (const auto& s : remediation.suggestions) {
    if (s.kind != SuggestionKind::add_rule) continue;
    if (!s.rule || !out.capabilities(s.node).count(std::string(policy::kFiltering)))
      throw Error(ErrorKind::stale_remediation, "cannot add a rule on '" + s.node + "'");
    auto& list = out.firewalls[s.node];
    if (s.at_top) list.insert(list.begin(), *s.rule);
    else list.push_back(*s.rule);
  }
  policy::validate(out);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json source_json(const SourceKey& s) {
  return {{"ip", policy::format_ipv4(s.ip)}, {"port", s.port}};
}

nlohmann::ordered_json dest_json(const DestKey& d) {
  return {{"ip", policy::format_ipv4(d.ip)}, {"port", d.port}, {"proto", policy::to_string(d.proto)}};
}

nlohmann::ordered_json matrix_json(const ReachabilityMatrix& m) {
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : m.rows) rows.push_back(format_source(r));
  auto cols = nlohmann::ordered_json::array();
  for (const auto& c : m.cols) cols.push_back(format_destination(c));
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["rows"] = rows;
  j["cols"] = cols;
  j["cells"] = m.cells;
  return j;
}

}  // namespace

nlohmann::ordered_json finding_to_json(const Finding& f) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["kind"] = to_string(f.kind);
  if (f.kind == FindingKind::not_enforceable) {
    j["policy"] = f.policy_id;
    j["subject"] = f.subject;
    j["object"] = f.object;
    j["path"] = f.path;
  } else {
    j["firewall"] = f.firewall;
    j["source"] = source_json(*f.source);
    j["destination"] = dest_json(*f.destination);
  }
  j["detail"] = f.detail;
  return j;
}

nlohmann::ordered_json report_to_json(const Report& r) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["path_semantics"] = "every simple subject-object path must cross a filtering node";
  auto findings = nlohmann::ordered_json::array();
  for (const auto& f : r.findings) findings.push_back(finding_to_json(f));
  j["findings"] = findings;
  auto fws = nlohmann::ordered_json::array();
  for (const auto& fr : r.firewalls) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    o["firewall"] = fr.composition.firewall;
    auto gen = nlohmann::ordered_json::array();
    for (const auto& rule : r.refinement.generated.at(fr.composition.firewall))
      gen.push_back(policy::rule_to_json(rule));
    o["generated_rules"] = gen;
    o["generated"] = matrix_json(fr.composition.generated);
    o["deployed"] = matrix_json(fr.composition.deployed);
    o["delta"] = fr.analysis.delta.cells;
    fws.push_back(o);
  }
  j["firewalls"] = fws;
  return j;
}

nlohmann::ordered_json remediation_to_json(const Remediation& r) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : r.suggestions) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    o["kind"] = to_string(s.kind);
    o["node"] = s.node;
    if (s.rule) o["rule"] = policy::rule_to_json(*s.rule);
    if (s.index) o["index"] = *s.index;
    if (s.kind == SuggestionKind::add_rule) o["position"] = s.at_top ? "top" : "bottom";
    o["reason"] = s.reason;
    arr.push_back(o);
  }
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["suggestions"] = arr;
  return j;
}

Remediation remediation_from_json(const nlohmann::json& j) {
  Remediation r;
  try {
    for (const auto& o : j.at("suggestions")) {
      Suggestion s;
      auto kind = o.at("kind").get<std::string>();
      if (kind == "add_rule") s.kind = SuggestionKind::add_rule;
      else if (kind == "remove_rule") s.kind = SuggestionKind::remove_rule;
      else if (kind == "install_filtering") s.kind = SuggestionKind::install_filtering;
      else throw Error(ErrorKind::invalid_config, "unknown suggestion kind '" + kind + "'");
      s.node = o.at("node").get<std::string>();
      if (o.contains("rule")) s.rule = policy::rule_from_json(o["rule"]);
      if (o.contains("index")) s.index = o["index"].get<std::size_t>();
      s.at_top = o.value("position", std::string("bottom")) == "top";
      s.reason = o.value("reason", std::string{});
      r.suggestions.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid_config, std::string("remediation document: ") + e.what());
  }
  return r;
}

}  // namespace siem::reach
