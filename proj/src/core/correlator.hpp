#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "collector.hpp"
#include "event.hpp"

namespace siem::corr {

struct CorrelationRule {
  std::string rule_id;
  std::string event_type;                      // required match
  std::vector<get::FieldCondition> conditions;  // optional extra constraints
  std::vector<std::string> group_by;            // field paths
  std::size_t threshold = 1;                    // occurrences
  std::int64_t window_ms = 60'000;
  std::string description;  // may reference group fields as ${field}
  int severity = 5;
};

/// Throws Error(invalid_config) on threshold < 1, window <= 0 or unknown
/// field paths.
void validate(const CorrelationRule& rule);

/// True when the event satisfies the rule's match predicate.
bool matches(const CorrelationRule& rule, const NormalizedEvent& event);

struct CorrelationResult {
  std::vector<Alarm> alarms;
  // Events that matched a rule but lacked a group_by field, per rule.
  std::map<std::string, std::size_t> missing_group_fields;
};

/// Streaming sliding-window correlation over timestamp-ordered events.
///
/// Per rule and group key the engine keeps the matching events since the last
/// alarm that lie within `window_ms` of the newest one. When that count
/// reaches the threshold an alarm listing exactly those events is raised and
/// the group's window is cleared. Alarms are ordered by detection time, then
/// rule_id, then group key; ids are assigned after ordering.
class Correlator {
 public:
  explicit Correlator(std::vector<CorrelationRule> rules);

  void push(const NormalizedEvent& event);
  CorrelationResult finish();

 private:
  struct Pending {
    Alarm alarm;
    std::string group_key;
  };
  struct Window {
    std::deque<std::pair<std::int64_t, std::string>> entries;
  };

  std::vector<CorrelationRule> rules_;
  std::vector<std::map<std::string, Window>> windows_;
  std::vector<Pending> pending_;
  std::map<std::string, std::size_t> missing_;
  std::int64_t last_timestamp_ = INT64_MIN;
};

CorrelationResult correlate(const std::vector<NormalizedEvent>& events,
                            const std::vector<CorrelationRule>& rules);

/// Joins the group_by values with '|'; nullopt when a field is missing.
std::optional<std::string> group_key(const CorrelationRule& rule, const NormalizedEvent& event);

CorrelationRule rule_from_json(const nlohmann::json& j);
std::vector<CorrelationRule> rules_from_json(const nlohmann::json& j);

}  // namespace siem::corr
