#include "correlator.hpp"

#include <algorithm>
#include <climits>
#include <set>

#include "error.hpp"

namespace siem::corr {

namespace {

[[noreturn]] void config_error(const std::string& why) {
  throw Error(ErrorKind::invalid_config, why);
}

std::string render_description(const CorrelationRule& rule, const NormalizedEvent& e) {
  std::string out;
  const std::string& d = rule.description;
  for (std::size_t i = 0; i < d.size();) {
    if (d.compare(i, 2, "${") == 0) {
      auto close = d.find('}', i + 2);
      if (close != std::string::npos) {
        auto v = field_value(e, std::string_view(d).substr(i + 2, close - i - 2));
        out += v ? *v : "?";
        i = close + 1;
        continue;
      }
    }
    out += d[i++];
  }
  return out;
}

}  // namespace

void validate(const CorrelationRule& r) {
  if (r.rule_id.empty()) config_error("correlation rule without an id");
  if (r.event_type.empty()) config_error("rule '" + r.rule_id + "': empty event_type");
  if (r.threshold < 1) config_error("rule '" + r.rule_id + "': threshold must be >= 1");
  if (r.window_ms <= 0) config_error("rule '" + r.rule_id + "': window must be > 0");
  if (r.severity < 0 || r.severity > kMaxSeverity)
    config_error("rule '" + r.rule_id + "': severity out of range");
  for (const auto& f : r.group_by)
    if (!is_valid_field_path(f)) config_error("rule '" + r.rule_id + "': bad group_by '" + f + "'");
  for (const auto& c : r.conditions)
    if (!is_valid_field_path(c.field))
      config_error("rule '" + r.rule_id + "': bad condition field '" + c.field + "'");
}

bool matches(const CorrelationRule& rule, const NormalizedEvent& e) {
  if (e.event_type != rule.event_type) return false;
  return std::all_of(rule.conditions.begin(), rule.conditions.end(),
                     [&](const get::FieldCondition& c) { return get::condition_holds(c, e); });
}

std::optional<std::string> group_key(const CorrelationRule& rule, const NormalizedEvent& e) {
  std::string key;
  for (std::size_t i = 0; i < rule.group_by.size(); ++i) {
    auto v = field_value(e, rule.group_by[i]);
    if (!v) return std::nullopt;
    if (i) key += '|';
    key += *v;
  }
  return key;
}

Correlator::Correlator(std::vector<CorrelationRule> rules) : rules_(std::move(rules)) {
  std::set<std::string> ids;
  for (const auto& r : rules_) {
    validate(r);
    if (!ids.insert(r.rule_id).second) config_error("duplicate rule '" + r.rule_id + "'");
  }
  windows_.resize(rules_.size());
}

void Correlator::push(const NormalizedEvent& e) {
  if (e.timestamp < last_timestamp_)
    throw Error(ErrorKind::malformed_event,
                "event " + e.event_id + " arrives out of timestamp order");
  last_timestamp_ = e.timestamp;

  for (std::size_t r = 0; r < rules_.size(); ++r) {
    const auto& rule = rules_[r];
    if (!matches(rule, e)) continue;
    auto key = group_key(rule, e);
    if (!key) {
      ++missing_[rule.rule_id];
      continue;
    }
    auto& win = windows_[r][*key].entries;
    win.emplace_back(e.timestamp, e.event_id);
    while (e.timestamp - win.front().first > rule.window_ms) win.pop_front();
    if (win.size() < rule.threshold) continue;

    Alarm a;
    a.rule_id = rule.rule_id;
    a.timestamp = e.timestamp;
    for (const auto& [_, id] : win) a.contributing_events.push_back(id);
    a.description = render_description(rule, e);
    a.severity = rule.severity;
    pending_.push_back({std::move(a), *key});
    win.clear();
  }
}

CorrelationResult Correlator::finish() {
  std::stable_sort(pending_.begin(), pending_.end(), [](const Pending& a, const Pending& b) {
    if (a.alarm.timestamp != b.alarm.timestamp) return a.alarm.timestamp < b.alarm.timestamp;
    if (a.alarm.rule_id != b.alarm.rule_id) return a.alarm.rule_id < b.alarm.rule_id;
    return a.group_key < b.group_key;
  });
  CorrelationResult out;
  std::size_t n = 0;
  for (auto& p : pending_) {
    p.alarm.alarm_id = "alarm-" + std::to_string(++n);
    out.alarms.push_back(std::move(p.alarm));
  }
  out.missing_group_fields = std::move(missing_);
  pending_.clear();
  return out;
}

CorrelationResult correlate(const std::vector<NormalizedEvent>& events,
                            const std::vector<CorrelationRule>& rules) {
  Correlator c(rules);
  for (const auto& e : events) c.push(e);
  return c.finish();
}

CorrelationRule rule_from_json(const nlohmann::json& j) {
  try {
    CorrelationRule r;
    r.rule_id = j.at("id").get<std::string>();
    const auto& m = j.at("match");
    r.event_type = m.at("event_type").get<std::string>();
    for (const auto& c : m.value("conditions", nlohmann::json::array())) {
      get::FieldCondition fc;
      fc.field = c.at("field").get<std::string>();
      auto op = c.value("op", std::string("=="));
      static const std::map<std::string, get::Comparator> ops{
          {"==", get::Comparator::eq}, {"!=", get::Comparator::ne}, {"<", get::Comparator::lt},
          {"<=", get::Comparator::le}, {">", get::Comparator::gt},  {">=", get::Comparator::ge}};
      auto it = ops.find(op);
      if (it == ops.end()) config_error("rule '" + r.rule_id + "': unknown operator '" + op + "'");
      fc.op = it->second;
      const auto& v = c.at("value");
      fc.value = v.is_string() ? v.get<std::string>() : v.dump();
      r.conditions.push_back(std::move(fc));
    }
    r.group_by = j.value("group_by", std::vector<std::string>{});
    auto threshold = j.value("threshold", std::int64_t{1});
    if (threshold < 1) config_error("rule '" + r.rule_id + "': threshold must be >= 1");
    r.threshold = static_cast<std::size_t>(threshold);
    r.window_ms = j.value("window_ms", std::int64_t{60'000});
    const auto& alarm = j.at("alarm");
    r.description = alarm.at("description").get<std::string>();
    r.severity = alarm.value("severity", 5);
    validate(r);
    return r;
  } catch (const nlohmann::json::exception& e) {
    config_error(std::string("rule document: ") + e.what());
  }
}

std::vector<CorrelationRule> rules_from_json(const nlohmann::json& j) {
  std::vector<CorrelationRule> rules;
  if (j.is_object() && !j.contains("rules"))
    throw Error(ErrorKind::invalid_config, "rules document needs a \"rules\" array");
  const auto& list = j.is_object() ? j.at("rules") : j;
  if (!list.is_array()) throw Error(ErrorKind::invalid_config, "rules must be an array");
  for (const auto& r : list) rules.push_back(rule_from_json(r));
  return rules;
}

}  // namespace siem::corr
