#include <doctest.h>

#include "collector.hpp"
#include "error.hpp"

using namespace siem;
using namespace siem::get;

namespace {

Grammar auth_grammar() {
  return grammar_from_json(nlohmann::json::parse(R"J({
    "name": "auth_log",
    "tokens": [
      {"name": "ts", "pattern": "(\\d{4}-\\d\\d-\\d\\dT\\d\\d:\\d\\d:\\d\\dZ)"},
      {"name": "proc", "pattern": "([a-z]+)\\[\\d+\\]:"},
      {"name": "kind", "pattern": "(auth_failure|auth_success)"},
      {"name": "user", "pattern": "user=(\\S+)"},
      {"name": "src", "pattern": "src=(\\d+\\.\\d+\\.\\d+\\.\\d+)"},
      {"name": "dport", "pattern": "dport=(\\d+)"},
      {"name": "kv", "pattern": "([a-z_]+)=(\\S+)"}
    ],
    "line": ["ts", "proc", "kind", "user?", "src", "dport?", "kv*"],
    "bindings": {"ts": "timestamp", "kind": "event_type", "src": "source.ip",
                 "dport": "destination.port", "proc": "attributes.process",
                 "user": "attributes.user"},
    "value_maps": {"kind": {"auth_failure": "login_failed", "auth_success": "login_ok"}},
    "defaults": {"severity": "3", "destination.ip": "10.0.0.9"}
  })J"));
}

SecurityProbe ramp_probe() {
  return probe_from_json(nlohmann::json::parse(R"J({
    "id": "ramp",
    "states": ["steady", "suspicious"],
    "initial": "steady",
    "transitions": [
      {"from": "steady", "to": "suspicious",
       "guard": {"event_type": "reading", "rates": [{"field": "attributes.Q", "gt": 20}]},
       "emit": {"event_type": "ramp_anomaly", "layer": "physical_sensor", "severity": 8}},
      {"from": "suspicious", "to": "steady",
       "guard": {"event_type": "reading",
                 "conditions": [{"field": "attributes.Q", "op": "<=", "value": 60}]}}
    ]
  })J"));
}

NormalizedEvent reading(std::int64_t t, double q, std::string id) {
  NormalizedEvent e;
  e.event_id = std::move(id);
  e.timestamp = t;
  e.layer = Layer::physical_sensor;
  e.event_type = "reading";
  e.attributes["Q"] = std::to_string(q);
  return e;
}

}  // namespace

TEST_CASE("adaptable parser binds tokens to event fields") {
  AdaptableParser p(auth_grammar());
  SourceContext ctx{"auth", Layer::logical_access, 4, std::nullopt};
  auto e = p.parse("2024-01-01T00:00:05Z sshd[4121]: auth_failure user=admin src=192.168.1.10 "
                   "dport=2222 session=abc",
                   ctx);
  CHECK(e.timestamp == 1704067205000);
  CHECK(e.event_type == "login_failed");
  CHECK(e.layer == Layer::logical_access);
  CHECK(e.severity == 3);
  REQUIRE(e.source);
  CHECK(e.source->ip == "192.168.1.10");
  REQUIRE(e.destination);
  CHECK(e.destination->ip == "10.0.0.9");
  CHECK(e.destination->port == 2222);
  CHECK(e.attributes.at("process") == "sshd");
  CHECK(e.attributes.at("user") == "admin");
  CHECK(e.attributes.at("session") == "abc");
  CHECK(e.event_id == "auth-4");
}

TEST_CASE("optional tokens may be absent") {
  AdaptableParser p(auth_grammar());
  SourceContext ctx{"auth", Layer::logical_access, 1, std::nullopt};
  auto e = p.parse("2024-01-01T00:00:05Z sshd[1]: auth_success src=10.1.1.1", ctx);
  CHECK(e.event_type == "login_ok");
  CHECK_FALSE(e.attributes.count("user"));
  CHECK_FALSE(e.destination->port);
}

TEST_CASE("lines outside the grammar are rejected") {
  AdaptableParser p(auth_grammar());
  SourceContext ctx{"auth", Layer::logical_access, 1, std::nullopt};
  auto reject = [&](const char* line) {
    try {
      p.parse(line, ctx);
    } catch (const Error& e) {
      return e.kind() == ErrorKind::parse_reject;
    }
    return false;
  };
  CHECK(reject("-- log rotated --"));
  CHECK(reject("2024-01-01T00:00:05Z sshd[1]: auth_success"));            // src missing
  CHECK(reject("2024-01-01T00:00:05Z sshd[1]: auth_success src=1.2.3.4 dport=99999"));
  CHECK(reject(""));
}

TEST_CASE("grammar validation") {
  auto g = auth_grammar();
  g.field_bindings["ts"] = "nowhere";
  CHECK_THROWS_AS(validate(g), Error);
  g = auth_grammar();
  g.line_rule.push_back({"undeclared", Repeat::once});
  CHECK_THROWS_AS(validate(g), Error);
  g = auth_grammar();
  g.token_rules[0].pattern = "(unclosed";
  CHECK_THROWS_AS(validate(g), Error);
}

TEST_CASE("probe determinism check rejects overlapping guards") {
  auto p = ramp_probe();
  CHECK_NOTHROW(validate(p));
  Transition t;
  t.from = "steady";
  t.to = "steady";
  t.guard.event_type = "reading";
  t.guard.conditions.push_back({"attributes.Q", Comparator::gt, "100"});
  p.transitions.push_back(t);
  // Q > 100 with a steep ramp enables both guards out of "steady".
  try {
    validate(p);
    FAIL("expected nondeterministic_probe");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::nondeterministic_probe);
  }
}

TEST_CASE("guards_overlap on constant comparisons") {
  Guard a, b;
  a.event_type = b.event_type = "x";
  a.conditions.push_back({"severity", Comparator::lt, "5"});
  b.conditions.push_back({"severity", Comparator::ge, "5"});
  CHECK_FALSE(guards_overlap(a, b));
  b.conditions[0].op = Comparator::ge;
  b.conditions[0].value = "4";
  CHECK(guards_overlap(a, b));
  b.event_type = "y";
  CHECK_FALSE(guards_overlap(a, b));
}

TEST_CASE("probe fires on the ramp and returns to steady") {
  auto p = ramp_probe();
  auto s = initial_state(p);
  std::vector<NormalizedEvent> emitted;
  const double qs[] = {50, 50, 90, 130, 130, 50};
  for (int i = 0; i < 6; ++i) {
    auto r = probe_step(p, s, reading(1000 * i, qs[i], "r" + std::to_string(i)));
    s = r.state;
    emitted.insert(emitted.end(), r.emitted.begin(), r.emitted.end());
    if (i == 2) CHECK(s.current_state == "suspicious");
  }
  REQUIRE(emitted.size() == 1);
  CHECK(emitted[0].event_type == "ramp_anomaly");
  CHECK(emitted[0].timestamp == 2000);
  CHECK(s.current_state == "steady");
}

TEST_CASE("rate guard is false without elapsed time") {
  auto p = ramp_probe();
  auto s = initial_state(p);
  s = probe_step(p, s, reading(1000, 50, "a")).state;
  auto r = probe_step(p, s, reading(1000, 500, "b"));
  CHECK(r.emitted.empty());
  CHECK(r.state.current_state == "steady");
}

TEST_CASE("collector merges streams by timestamp and quarantines rejects") {
  auto g = auth_grammar();
  RawStream a{"auth", "auth_log", Layer::logical_access,
              {"2024-01-01T00:00:05Z sshd[1]: auth_failure src=10.0.0.1",
               "garbage line",
               "2024-01-01T00:00:07Z sshd[1]: auth_failure src=10.0.0.1"}};
  RawStream b{"auth2", "auth_log", Layer::logical_access,
              {"2024-01-01T00:00:06Z sshd[2]: auth_success src=10.0.0.2",
               "2024-01-01T00:00:07Z sshd[2]: auth_success src=10.0.0.2"}};
  auto r = run_collector({g}, {}, {a, b});
  CHECK(r.lines_in == 5);
  REQUIRE(r.events.size() == 4);
  REQUIRE(r.quarantined.size() == 1);
  CHECK(r.quarantined[0].stream_id == "auth");
  CHECK(r.quarantined[0].line.line_number == 2);
  CHECK(r.events[0].event_id == "auth-1");
  CHECK(r.events[1].event_id == "auth2-1");
  CHECK(r.events[2].event_id == "auth-3");  // tie at :07 keeps stream order
  CHECK(r.events[3].event_id == "auth2-2");
}

TEST_CASE("collector rejects a stream naming an unknown grammar") {
  RawStream a{"x", "nope", Layer::network, {"line"}};
  CHECK_THROWS_AS(run_collector({auth_grammar()}, {}, {a}), Error);
}
