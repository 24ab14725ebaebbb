#include <doctest.h>

#include "../support/generators.hpp"
#include "../support/oracles.hpp"
#include "dam.hpp"
#include "error.hpp"
#include "reachability.hpp"

using namespace siem;
using namespace siem::reach;
using namespace siem::policy;

namespace {

SystemDescription line_system() {
  return system_from_json(nlohmann::json::parse(R"J({
    "hosts": [
      {"id": "H1", "ips": ["192.168.0.1"], "role": "operator"},
      {"id": "H2", "ips": ["192.168.10.10"]},
      {"id": "H3", "ips": ["192.168.0.2"], "role": "viewer"}
    ],
    "devices": [{"id": "FW1", "capabilities": ["filtering", "routing"]},
                {"id": "SW", "capabilities": ["routing"]}],
    "services": [{"host": "H2", "name": "web", "proto": "TCP", "ports": [80, 443]}],
    "links": [["H1", "SW"], ["H3", "SW"], ["SW", "FW1"], ["FW1", "H2"]],
    "client_ports": [49152]
  })J"));
}

AbstractPolicy reach_policy(std::string id, AttributeMap subj, AttributeMap obj,
                            Effect eff = Effect::permit) {
  AbstractPolicy p;
  p.policy_id = std::move(id);
  p.subject = std::move(subj);
  p.object = std::move(obj);
  p.effect = eff;
  return p;
}

FilteringRule concrete(const char* src, std::uint16_t sport, const char* dst, std::uint16_t dport,
                       Protocol proto = Protocol::TCP, RuleAction a = RuleAction::permit) {
  return {Ipv4Prefix::host(*parse_ipv4(src)), PortSet::single(sport), Ipv4Prefix::host(*parse_ipv4(dst)),
          PortSet::single(dport), proto, a};
}

}  // namespace

TEST_CASE("topology graph") {
  auto g = build_topology(line_system());
  REQUIRE(g.nodes.size() == 5);
  CHECK(g.nodes[0].id == "FW1");  // sorted ids
  CHECK(g.nodes[*g.index_of("FW1")].filtering);
  CHECK(g.nodes[*g.index_of("H1")].is_host);
  auto paths = simple_paths(g, *g.index_of("H1"), *g.index_of("H2"), 64);
  REQUIRE(paths.size() == 1);
  CHECK(paths[0].size() == 4);
}

TEST_CASE("path limit") {
  // A ladder with many parallel routes.
  nlohmann::json j = nlohmann::json::parse(R"({"hosts": [{"id": "a", "ips": ["10.0.0.1"]},
                                                          {"id": "b", "ips": ["10.0.0.2"]}],
                                                "links": []})");
  for (int i = 0; i < 5; ++i) {
    std::string r = "r" + std::to_string(i);
    j["devices"].push_back({{"id", r}, {"capabilities", {"routing"}}});
    j["links"].push_back({"a", r});
    j["links"].push_back({r, "b"});
  }
  auto sd = system_from_json(j);
  auto g = build_topology(sd);
  CHECK(simple_paths(g, 0, 1, 5).size() == 5);
  try {
    simple_paths(g, 0, 1, 4);
    FAIL("expected path_limit_exceeded");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::path_limit_exceeded);
  }
}

TEST_CASE("refinement of H1 reach H2:web across FW1") {
  auto sd = line_system();
  auto ref = refine({reach_policy("p", {{"ID", "H1"}}, {{"Type", "web"}})}, build_topology(sd), sd);
  REQUIRE(ref.generated.at("FW1").size() == 1);
  const auto& r = ref.generated.at("FW1")[0];
  CHECK(r.src_ip == Ipv4Prefix::host(*parse_ipv4("192.168.0.1")));
  CHECK(r.src_port.is_any());
  CHECK(r.dst_ip == Ipv4Prefix::host(*parse_ipv4("192.168.10.10")));
  CHECK(r.dst_port == PortSet::list({80, 443}));
  CHECK(r.proto == Protocol::TCP);
  CHECK(ref.not_enforceable.empty());

  auto empty = refine({}, build_topology(sd), sd);
  CHECK(empty.generated.at("FW1").empty());
  CHECK(empty.not_enforceable.empty());
}

TEST_CASE("unknown endpoints are rejected") {
  auto sd = line_system();
  auto kind = [&](const AbstractPolicy& p) {
    try {
      refine({p}, build_topology(sd), sd);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::io_error;
  };
  CHECK(kind(reach_policy("p", {{"ID", "ghost"}}, {{"Type", "web"}})) == ErrorKind::unknown_endpoint);
  CHECK(kind(reach_policy("p", {{"ID", "H1"}}, {{"Type", "ftp"}})) == ErrorKind::unknown_endpoint);
}

TEST_CASE("expansion of r1 into r1,1 and r1,2") {
  auto sd = line_system();
  FilteringRule r1{Ipv4Prefix::host(*parse_ipv4("192.168.0.1")), PortSet::any(),
                   Ipv4Prefix::host(*parse_ipv4("192.168.10.10")), PortSet::list({80, 443}),
                   Protocol::TCP, RuleAction::permit};
  auto e = expand({r1}, sd);
  CHECK(e == std::vector<FilteringRule>{concrete("192.168.0.1", 49152, "192.168.10.10", 80),
                                        concrete("192.168.0.1", 49152, "192.168.10.10", 443)});
}

TEST_CASE("expansion over a CIDR and over nothing") {
  auto sd = line_system();
  FilteringRule cidr{{*parse_ipv4("192.168.0.0"), 30}, PortSet::any(), Ipv4Prefix::any(),
                     PortSet::single(80), Protocol::ANY, RuleAction::permit};
  auto e = expand({cidr}, sd);
  CHECK(e == std::vector<FilteringRule>{concrete("192.168.0.1", 49152, "192.168.10.10", 80),
                                        concrete("192.168.0.2", 49152, "192.168.10.10", 80)});
  FilteringRule nowhere = cidr;
  nowhere.dst_ip = Ipv4Prefix::host(*parse_ipv4("8.8.8.8"));
  CHECK(expand({nowhere}, sd).empty());
  // A deny in front shadows the permit.
  FilteringRule deny = cidr;
  deny.action = RuleAction::deny;
  deny.src_ip = Ipv4Prefix::host(*parse_ipv4("192.168.0.2"));
  CHECK(expand({deny, cidr}, sd).size() == 1);
}

TEST_CASE("compose and analyze") {
  auto g = std::vector<FilteringRule>{concrete("10.0.0.1", 1, "10.0.0.2", 80),
                                      concrete("10.0.0.1", 1, "10.0.0.2", 443)};
  auto d = std::vector<FilteringRule>{concrete("10.0.0.1", 1, "10.0.0.2", 80)};
  auto c = compose(g, d, "fw");
  CHECK(c.generated.cells == std::vector<std::vector<int>>{{1, 1}});
  CHECK(c.deployed.cells == std::vector<std::vector<int>>{{1, 0}});
  auto a = analyze(c.generated, c.deployed, "fw");
  REQUIRE(a.findings.size() == 1);
  CHECK(a.findings[0].kind == FindingKind::anomaly);
  CHECK(a.findings[0].destination->port == 443);

  auto same = compose(d, d, "fw");
  CHECK(same.generated.cells == std::vector<std::vector<int>>{{1}});
  CHECK(analyze(same.generated, same.deployed, "fw").findings.empty());
  auto none = compose({}, {}, "fw");
  CHECK(none.generated.rows.empty());
  CHECK(none.generated.cols.empty());

  auto other = compose(g, g, "fw").deployed;
  other.cols.pop_back();
  for (auto& row : other.cells) row.pop_back();
  try {
    analyze(c.generated, other, "fw");
    FAIL("expected dimension_mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::dimension_mismatch);
  }
}

TEST_CASE("same-subnet pair is not enforceable; the switch gets filtering") {
  auto sd = line_system();
  sd.services.push_back({"H3", "ssh", Protocol::TCP, {22}});
  std::vector<AbstractPolicy> ps{reach_policy("p", {{"ID", "H1"}}, {{"Type", "ssh"}})};
  auto rep = run_analysis(ps, sd);
  REQUIRE(rep.findings.size() == 1);
  CHECK(rep.findings[0].kind == FindingKind::not_enforceable);
  CHECK(rep.findings[0].path == std::vector<std::string>{"H1", "SW", "H3"});
  auto rem = remediate(rep, ps, sd);
  REQUIRE(!rem.suggestions.empty());
  CHECK(rem.suggestions[0].kind == SuggestionKind::install_filtering);
  CHECK(rem.suggestions[0].node == "SW");
  auto fixed = react(sd, rem);
  CHECK(run_analysis(ps, fixed).findings.empty());
  CHECK(sd.firewall_nodes() == std::vector<std::string>{"FW1"});  // input untouched
}

TEST_CASE("misuse case: one security issue, removed by the remediation") {
  auto mc = dam::misuse_case();
  // The losing deny is lifted by conflict resolution before reachability.
  std::vector<AbstractPolicy> ps;
  for (const auto& p : mc.policies)
    if (p.effect == Effect::permit) ps.push_back(p);
  auto rep = run_analysis(ps, mc.system);
  REQUIRE(rep.findings.size() == 1);
  const auto& f = rep.findings[0];
  CHECK(f.kind == FindingKind::security_issue);
  CHECK(f.firewall == "fw1");
  CHECK(format_source(*f.source) == "192.168.1.10:49152");
  CHECK(format_destination(*f.destination) == "192.168.10.11:2222/TCP");

  auto rem = remediate(rep, ps, mc.system);
  REQUIRE(rem.suggestions.size() == 1);
  CHECK(rem.suggestions[0].kind == SuggestionKind::remove_rule);
  CHECK(rem.suggestions[0].index == 2u);
  auto fixed = react(mc.system, rem);
  CHECK(run_analysis(ps, fixed).findings.empty());

  // Applying it twice refers to a rule that is gone.
  try {
    react(fixed, rem);
    FAIL("expected stale_remediation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::stale_remediation);
  }
  CHECK(system_to_json(react(mc.system, {})) == system_to_json(mc.system));
  auto round = remediation_from_json(nlohmann::json::parse(remediation_to_json(rem).dump()));
  CHECK(round.suggestions == rem.suggestions);
}

TEST_CASE("property: delta cells equal the packet-oracle disagreement set") {
  gen::Rng r(99);
  for (int i = 0; i < 60; ++i) {
    auto s = gen::random_scenario(r);
    auto rep = run_analysis(s.policies, s.sd);
    for (const auto& fr : rep.firewalls) {
      const auto& fw = fr.composition.firewall;
      auto intended = oracle::intended_at(s.sd, s.policies, fw);
      auto it = s.sd.firewalls.find(fw);
      std::vector<FilteringRule> deployed = it == s.sd.firewalls.end() ? std::vector<FilteringRule>{} : it->second;
      std::set<std::tuple<Packet, int>> expected, got;
      for (const auto& p : oracle::packets(s.sd)) {
        int want = intended.count(p) ? 1 : 0;
        int have = oracle::allowed(deployed, p) ? 1 : 0;
        if (want != have) expected.insert({p, want - have});
      }
      const auto& d = fr.analysis.delta;
      for (std::size_t a = 0; a < d.rows.size(); ++a)
        for (std::size_t b = 0; b < d.cols.size(); ++b) {
          CHECK(std::abs(d.cells[a][b]) <= 1);
          if (d.cells[a][b]) got.insert({packet(d.rows[a], d.cols[b]), d.cells[a][b]});
        }
      CHECK(got == expected);
    }
  }
}

TEST_CASE("property: expansion preserves packet membership; remediation closes") {
  gen::Rng r(123);
  for (int i = 0; i < 60; ++i) {
    auto s = gen::random_scenario(r);
    auto rep = run_analysis(s.policies, s.sd);
    for (const auto& [fw, rules] : s.sd.firewalls) {
      auto e = expand(rules, s.sd);
      for (const auto& x : e) {
        CHECK(x.src_port.ranges.size() == 1);
        CHECK(x.proto != Protocol::ANY);
      }
      for (const auto& p : oracle::packets(s.sd)) CHECK(oracle::allowed(rules, p) == oracle::allowed(e, p));
    }
    if (rep.findings.empty()) continue;
    auto fixed = react(s.sd, remediate(rep, s.policies, s.sd));
    CHECK(run_analysis(s.policies, fixed).findings.empty());
  }
}
