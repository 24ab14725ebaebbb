#include <doctest.h>

#include <fstream>
#include <sstream>

#include "../support/generators.hpp"
#include "error.hpp"
#include "event.hpp"

using namespace siem;

namespace {

NormalizedEvent golden() {
  NormalizedEvent e;
  e.event_id = "auth-7";
  e.timestamp = 1704067210000;  // 2024-01-01T00:00:10Z
  e.layer = Layer::logical_access;
  e.event_type = "auth_success";
  e.source = Endpoint{"192.168.1.10", 40522};
  e.destination = Endpoint{"192.168.10.11", 2222};
  e.severity = 3;
  e.attributes = {{"user", "admin"}, {"process", "sshd"}};
  return e;
}

std::string read_file(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("event serialization matches the audited golden line") {
  const auto bytes = read_file(std::string(SIEM_TEST_DATA) + "/golden_event.jsonl");
  CHECK(serialize_event(golden()) == bytes);
  CHECK(deserialize_event(bytes) == golden());
}

TEST_CASE("iso8601 round trip") {
  CHECK(parse_iso8601_ms("2024-01-01T00:00:10Z") == 1704067210000);
  CHECK(parse_iso8601_ms("1970-01-01T00:00:00.001Z") == 1);
  CHECK(format_iso8601_ms(1704067210000) == "2024-01-01T00:00:10Z");
  CHECK(format_iso8601_ms(1704067210123) == "2024-01-01T00:00:10.123Z");
  CHECK_FALSE(parse_iso8601_ms("2024-13-01T00:00:00Z"));
  CHECK_FALSE(parse_iso8601_ms("2024-01-01 00:00:00Z"));
  CHECK_FALSE(parse_iso8601_ms("2024-01-01T00:00:00"));
}

TEST_CASE("deserialize rejects anything but the canonical form") {
  auto line = serialize_event(golden());
  CHECK_THROWS_AS(deserialize_event("{}"), Error);
  CHECK_THROWS_AS(deserialize_event("not json"), Error);
  // Reordered keys are valid JSON but not canonical.
  auto reordered = line;
  reordered.replace(reordered.find("\"timestamp\":1704067210000,"), 26, "");
  reordered.insert(reordered.find("\"severity\""), "\"timestamp\":1704067210000,");
  CHECK_THROWS_AS(deserialize_event(reordered), Error);
  std::string spaced = line;
  spaced.insert(1, " ");
  CHECK_THROWS_AS(deserialize_event(spaced), Error);
}

TEST_CASE("empty attributes serialize as an empty object") {
  auto e = golden();
  e.attributes.clear();
  auto line = serialize_event(e);
  CHECK(line.find("\"attributes\":{}") != std::string::npos);
  CHECK(deserialize_event(line) == e);
}

TEST_CASE("validate catches invariant violations") {
  auto e = golden();
  e.event_id.clear();
  CHECK_THROWS_AS(validate(e), Error);
  e = golden();
  e.severity = -1;
  CHECK_THROWS_AS(validate(e), Error);
  e = golden();
  e.source = Endpoint{"", std::nullopt};
  CHECK_THROWS_AS(validate(e), Error);
  Alarm a;
  a.alarm_id = "alarm-1";
  a.rule_id = "r";
  CHECK_THROWS_AS(validate(a), Error);  // no contributing events
}

TEST_CASE("stream reading quarantines bad lines and duplicate ids") {
  auto ok = serialize_event(golden());
  std::stringstream in(ok + "garbage\n" + ok);
  auto r = read_events(in);
  CHECK(r.lines_in == 3);
  CHECK(r.items.size() == 1);
  REQUIRE(r.quarantined.size() == 2);
  CHECK(r.quarantined[0].line_number == 2);
  CHECK(r.quarantined[1].line_number == 3);
  CHECK(r.lines_in == r.items.size() + r.quarantined.size());
}

TEST_CASE("field paths") {
  auto e = golden();
  CHECK(field_value(e, "source.ip") == "192.168.1.10");
  CHECK(field_value(e, "destination.port") == "2222");
  CHECK(field_value(e, "attributes.user") == "admin");
  CHECK(field_value(e, "severity") == "3");
  CHECK_FALSE(field_value(e, "attributes.missing"));
  CHECK(is_valid_field_path("attributes.anything"));
  CHECK_FALSE(is_valid_field_path("source.mac"));
}

TEST_CASE("property: serialize then deserialize is the identity") {
  gen::Rng r(11);
  for (int i = 0; i < 300; ++i) {
    for (auto& e : gen::random_events(r, 5)) {
      if (r.chance(0.3)) e.attributes["note"] = "quote \" and \\ and unicode \xc3\xa9";
      auto line = serialize_event(e);
      CHECK(line.back() == '\n');
      CHECK(deserialize_event(line) == e);
      CHECK(serialize_event(deserialize_event(line)) == line);
    }
  }
}

TEST_CASE("alarm round trip") {
  Alarm a{"alarm-3", "brute_force", 1704067209000, {"auth-2", "auth-3"}, "five failures", 7};
  auto line = serialize_alarm(a);
  CHECK(line ==
        "{\"alarm_id\":\"alarm-3\",\"rule_id\":\"brute_force\",\"timestamp\":1704067209000,"
        "\"contributing_events\":[\"auth-2\",\"auth-3\"],\"description\":\"five failures\","
        "\"severity\":7}\n");
  CHECK(deserialize_alarm(line) == a);
}
