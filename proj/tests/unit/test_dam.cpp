#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "../support/generators.hpp"
#include "dam.hpp"
#include "error.hpp"

using namespace siem;
using namespace siem::dam;

namespace {

bool close_rel(double a, double b, double tol = 1e-9) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

Command set_q(double q) {
  Command c;
  c.kind = CommandKind::set_Q;
  c.value = q;
  return c;
}

}  // namespace

TEST_CASE("reference power value") {
  DamState s;
  CHECK(close_rel(power(s), 45'000'000.0));
  CHECK(close_rel(critical_flow(s), 100.0));
}

TEST_CASE("power is linear in Q") {
  gen::Rng r(8);
  for (int i = 0; i < 100; ++i) {
    DamState s;
    s.rho = r.real(900, 1100);
    s.eta = r.real(0.5, 1.0);
    s.g = r.real(9.7, 9.9);
    s.delta_h = r.real(10, 300);
    auto q1 = r.real(0, 200), q2 = r.real(0, 200), k = r.real(0, 5);
    auto at = [&](double q) {
      auto t = s;
      t.Q = q;
      return power(t);
    };
    CHECK(close_rel(at(q1 + q2), at(q1) + at(q2)));
    CHECK(close_rel(at(k * q1), k * at(q1)));
    CHECK(at(0) == 0.0);
  }
}

TEST_CASE("validation") {
  DamState s;
  s.eta = 1.5;
  CHECK_THROWS_AS(validate(s), Error);
  s = DamState{};
  s.Q = -1;
  CHECK_THROWS_AS(validate(s), Error);
  CHECK_THROWS_AS(step(DamState{}, std::nullopt, 0.0), Error);
}

TEST_CASE("ramp and latch") {
  DamState s;
  auto r = step(s, set_q(200), 1.0);
  CHECK(r.state.Q == 90.0);
  CHECK(r.events.size() == 1);
  r = step(r.state, std::nullopt, 1.0);
  CHECK(r.state.Q == 130.0);
  REQUIRE(r.events.size() == 2);
  CHECK(r.events[1].event_type == "turbine_emergency");
  CHECK(r.events[1].severity == 10);
  CHECK(r.state.destroyed);
  auto after = step(r.state, set_q(10), 1.0);
  CHECK(after.state.Q == 130.0);  // frozen
  REQUIRE(after.events.size() == 1);
  CHECK(after.events[0].attributes.at("phase") == "post-failure");
}

TEST_CASE("exactly at the limit does not trip") {
  DamState s;
  auto r = step(s, set_q(100), 1.0);
  r = step(r.state, std::nullopt, 1.0);
  CHECK(r.state.Q == 100.0);
  CHECK_FALSE(r.state.destroyed);
}

TEST_CASE("latch time matches the closed-form crossing") {
  gen::Rng r(31);
  for (int i = 0; i < 100; ++i) {
    DamState s;
    s.Q = r.real(10, 90);
    s.max_ramp = r.real(1, 50);
    const double dt = r.real(0.1, 2.0);
    const double qc = critical_flow(s);
    const double target = qc + r.real(1, 100);
    // First step count k with Q0 + k * ramp * dt > qc.
    const double k_expected = std::floor((qc - s.Q) / (s.max_ramp * dt)) + 1;
    auto st = s;
    std::optional<Command> cmd = set_q(target);
    int k = 0;
    while (!st.destroyed && k < 10'000) {
      st = step(st, cmd, dt).state;
      cmd.reset();
      ++k;
    }
    CHECK(k == static_cast<int>(k_expected));
  }
}

TEST_CASE("misuse case script") {
  auto mc = misuse_case();
  CHECK(mc.script.start_ms == 1704067200000);
  std::vector<std::int64_t> emergencies;
  for (const auto& e : mc.physical_events)
    if (e.event_type == "turbine_emergency") emergencies.push_back(e.timestamp);
  CHECK(emergencies == std::vector<std::int64_t>{1704067217000});
  const auto& auth = mc.logs.at("auth");
  CHECK(auth.front() == "-- log rotated --");
  int failures = 0;
  for (const auto& l : auth) failures += l.find("auth_failure") != std::string::npos;
  CHECK(failures == 5);

  auto dir = std::filesystem::temp_directory_path() / "siem_test_bundle";
  std::filesystem::remove_all(dir);
  write_bundle(mc, dir);
  for (const char* f : {"system.json", "policies.json", "hierarchy.json", "collector.json", "rules.json",
                        "script.json", "pipeline.json", "logs/sensors.log", "logs/auth.log"})
    CHECK(std::filesystem::is_regular_file(dir / f));
}

TEST_CASE("number formatting is shortest round trip") {
  CHECK(format_number(50) == "50");
  CHECK(format_number(45e6) == "4.5e+07");
  CHECK(format_number(0.1) == "0.1");
}
