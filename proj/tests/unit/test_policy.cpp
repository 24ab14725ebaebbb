#include <doctest.h>

#include "../support/generators.hpp"
#include "error.hpp"
#include "policy.hpp"

using namespace siem;
using namespace siem::policy;

namespace {

SystemDescription small_system() {
  return system_from_json(nlohmann::json::parse(R"J({
    "hosts": [
      {"id": "ws", "ips": ["10.0.0.1"], "role": "operator", "organization": "ops"},
      {"id": "srv", "ips": ["10.0.1.1"], "owner": "ops"}
    ],
    "devices": [{"id": "fw", "capabilities": ["filtering", "routing"]}],
    "services": [{"host": "srv", "name": "web", "proto": "TCP", "ports": [80, 443]}],
    "users": [{"id": "alice", "role": "admin", "organization": "it", "host": "ws"}],
    "links": [["ws", "fw"], ["fw", "srv"]],
    "firewalls": {"fw": [{"src_ip": "10.0.0.0/24", "dst_ip": "*", "dst_port": "80,443",
                          "proto": "TCP", "action": "permit"}]}
  })J"));
}

AbstractPolicy pol(std::string id, AttributeMap subj, AttributeMap obj, Effect eff,
                   AttributeMap env = {}) {
  AbstractPolicy p;
  p.policy_id = std::move(id);
  p.subject = std::move(subj);
  p.object = std::move(obj);
  p.environment = std::move(env);
  p.effect = eff;
  return p;
}

bool subset(const AttributeMap& cond, const AttributeMap& entity) {
  for (const auto& [k, v] : cond) {
    auto it = entity.find(k);
    if (it == entity.end() || it->second != v) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("rule parsing") {
  auto r = rule_from_json(nlohmann::json::parse(
      R"({"src_ip": "192.168.0.0/16", "src_port": "1000-2000", "dst_ip": "10.0.0.1",
          "dst_port": [80, 443], "proto": "UDP", "action": "deny"})"));
  CHECK(r.src_ip.length == 16);
  CHECK(r.src_port.contains(1500));
  CHECK_FALSE(r.src_port.contains(999));
  CHECK(r.dst_port.contains(443));
  CHECK_FALSE(r.dst_port.contains(81));
  CHECK(r.proto == Protocol::UDP);
  CHECK(r.action == RuleAction::deny);
  CHECK(rule_from_json(rule_to_json(r)) == r);
  CHECK_THROWS_AS(rule_from_json(nlohmann::json::parse(R"({"src_ip": "10.0.0.1/24", "dst_ip": "*"})")),
                  Error);
  CHECK_THROWS_AS(rule_from_json(nlohmann::json::parse(R"({"src_ip": "300.0.0.1", "dst_ip": "*"})")),
                  Error);
  CHECK_THROWS_AS(rule_from_json(nlohmann::json::parse(R"({"src_ip": "*", "dst_ip": "*", "dst_port": 70000})")),
                  Error);
}

TEST_CASE("rule matching is first-match friendly") {
  Packet p{*parse_ipv4("10.0.0.1"), 49152, *parse_ipv4("10.0.1.1"), 80, Protocol::TCP};
  auto sd = small_system();
  CHECK(rule_matches(sd.firewalls.at("fw")[0], p));
  p.proto = Protocol::UDP;
  CHECK_FALSE(rule_matches(sd.firewalls.at("fw")[0], p));
  CHECK(rule_matches(FilteringRule{}, p));
}

TEST_CASE("system description round trip and validation") {
  auto sd = small_system();
  CHECK(sd.firewall_nodes() == std::vector<std::string>{"fw"});
  auto again = system_from_json(nlohmann::json::parse(system_to_json(sd).dump()));
  CHECK(system_to_json(again) == system_to_json(sd));

  auto j = nlohmann::json::parse(system_to_json(sd).dump());
  j["links"].push_back({"fw", "ghost"});
  CHECK_THROWS_AS(system_from_json(j), Error);

  j = nlohmann::json::parse(system_to_json(sd).dump());
  j["firewalls"]["ws"] = nlohmann::json::array();
  CHECK_THROWS_AS(system_from_json(j), Error);

  j = nlohmann::json::parse(system_to_json(sd).dump());
  j["services"].push_back({{"host", "nowhere"}, {"name", "x"}, {"proto", "TCP"}, {"ports", {1}}});
  CHECK_THROWS_AS(system_from_json(j), Error);

  // Two nodes labelled with the same subnet must be connected.
  j = nlohmann::json::parse(system_to_json(sd).dump());
  j["hosts"][0]["subnet"] = "lan";
  j["hosts"][1]["subnet"] = "lan";
  CHECK_NOTHROW(system_from_json(j));
  j["links"].erase(1);
  try {
    system_from_json(j);
    FAIL("expected invalid_system_description");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_system_description);
  }
}

TEST_CASE("policy validation and normalization") {
  auto p = pol("p", {{"Role", " operator "}, {"ID", ""}}, {{"Type", "web"}}, Effect::permit);
  p.action = "REACH";
  auto n = normalize(p);
  CHECK(n.subject == AttributeMap{{"Role", "operator"}});
  CHECK(n.action == "reach");
  CHECK(normalize(n) == n);
  CHECK_NOTHROW(validate(n));
  auto bad = n;
  bad.subject["Colour"] = "red";
  CHECK_THROWS_AS(validate(bad), Error);
  bad = n;
  bad.subject.clear();
  CHECK_THROWS_AS(validate(bad), Error);
}

TEST_CASE("universe maps hosts, users and services") {
  auto sd = small_system();
  auto u = build_universe(sd, {});
  REQUIRE(u.subjects.size() == 3);
  CHECK(u.subjects[2].attributes.at("ID") == "alice");
  CHECK(u.subjects[2].host_id == "ws");
  REQUIRE(u.objects.size() == 1);
  CHECK(u.objects[0].attributes == AttributeMap{{"ID", "srv"}, {"Type", "web"}, {"Owner", "ops"}});
  CHECK(u.environments.size() == 1);  // no environment mentioned: only "unset"
  auto u2 = build_universe(sd, {pol("p", {{"ID", "ws"}}, {}, Effect::permit, {{"Time", "day"}})});
  CHECK(u2.environments.size() == 2);
}

TEST_CASE("equivalence, redundancy and conflicts") {
  auto sd = small_system();
  std::vector<AbstractPolicy> ps{
      pol("a", {{"Role", "operator"}}, {{"Type", "web"}}, Effect::permit),
      pol("b", {{"Role", "operator"}}, {{"Type", "web"}}, Effect::permit),
      pol("c", {{"ID", "ws"}, {"Role", "operator"}}, {{"Type", "web"}}, Effect::permit),
      pol("d", {{"Organization", "it"}}, {{"Type", "web"}}, Effect::deny),
      pol("e", {{"Organization", "ops"}}, {{"Type", "web"}}, Effect::deny),
  };
  auto u = build_universe(sd, ps);
  auto an = detect_policy_anomalies(ps, u);
  // c selects the same entities as a and b but with more conditions.
  CHECK(an == std::vector<PolicyAnomaly>{{AnomalyKind::equivalence, "a", "b"},
                                         {AnomalyKind::redundancy, "c", "a"},
                                         {AnomalyKind::redundancy, "c", "b"}});
  auto cf = detect_conflicts(ps, u);
  // d selects only alice, who is no operator; e overlaps every permit.
  CHECK(cf == std::vector<PolicyConflict>{{"a", "e"}, {"b", "e"}, {"c", "e"}});
}

TEST_CASE("environment scopes separate otherwise conflicting policies") {
  auto sd = small_system();
  std::vector<AbstractPolicy> ps{
      pol("day", {{"ID", "ws"}}, {{"Type", "web"}}, Effect::permit, {{"Time", "day"}}),
      pol("night", {{"ID", "ws"}}, {{"Type", "web"}}, Effect::deny, {{"Time", "night"}}),
      pol("any", {{"ID", "ws"}}, {{"Type", "web"}}, Effect::deny),
  };
  auto cf = detect_conflicts(ps, build_universe(sd, ps));
  CHECK(cf == std::vector<PolicyConflict>{{"any", "day"}});
}

TEST_CASE("property: conflicts match a brute-force entity oracle") {
  gen::Rng r(5);
  for (int i = 0; i < 150; ++i) {
    auto s = gen::random_scenario(r);
    for (int k = 0; k < 3; ++k) {
      auto p = s.policies[static_cast<std::size_t>(r.between(0, static_cast<int>(s.policies.size()) - 1))];
      p.policy_id = "q" + std::to_string(k);
      p.effect = p.effect == Effect::permit ? Effect::deny : Effect::permit;
      if (r.chance(0.5)) p.subject = {{"Role", "admin"}};
      s.policies.push_back(p);
    }
    auto u = build_universe(s.sd, s.policies);
    std::vector<PolicyConflict> expected;
    for (std::size_t a = 0; a < s.policies.size(); ++a)
      for (std::size_t b = a + 1; b < s.policies.size(); ++b) {
        const auto& x = s.policies[a];
        const auto& y = s.policies[b];
        if (x.effect == y.effect) continue;
        bool subj = false, obj = false, env = false;
        for (const auto& e : u.subjects) subj |= subset(x.subject, e.attributes) && subset(y.subject, e.attributes);
        for (const auto& e : u.objects) obj |= subset(x.object, e.attributes) && subset(y.object, e.attributes);
        for (const auto& e : u.environments) env |= subset(x.environment, e) && subset(y.environment, e);
        if (subj && obj && env)
          expected.push_back({std::min(x.policy_id, y.policy_id), std::max(x.policy_id, y.policy_id)});
      }
    std::sort(expected.begin(), expected.end());
    auto got = detect_conflicts(s.policies, u);
    std::sort(got.begin(), got.end());
    CHECK(got == expected);
  }
}
