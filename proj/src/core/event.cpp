#include "event.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <istream>
#include <set>

#include <json.hpp>

#include "error.hpp"

namespace siem {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

namespace {

constexpr std::array<std::pair<Layer, const char*>, 5> kLayerNames{{
    {Layer::physical_sensor, "physical_sensor"},
    {Layer::logical_access, "logical_access"},
    {Layer::physical_access, "physical_access"},
    {Layer::network, "network"},
    {Layer::application, "application"},
}};

[[noreturn]] void malformed(const std::string& why) {
  throw Error(ErrorKind::malformed_event, why);
}

bool valid_utf8(std::string_view s) {
  try {
    (void)json(std::string(s)).dump();
    return true;
  } catch (const json::type_error&) {
    return false;
  }
}

void check_text(std::string_view what, std::string_view s) {
  if (!valid_utf8(s)) malformed(std::string(what) + " is not valid UTF-8");
}

ojson endpoint_json(const std::optional<Endpoint>& ep) {
  if (!ep) return nullptr;
  ojson j = ojson::object();
  j["ip"] = ep->ip;
  if (ep->port) j["port"] = *ep->port;
  return j;
}

std::optional<Endpoint> endpoint_from(const json& j, const char* name) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_object()) malformed(std::string(name) + " must be an object or null");
  Endpoint ep;
  auto ip = j.find("ip");
  if (ip == j.end() || !ip->is_string()) malformed(std::string(name) + ".ip missing");
  ep.ip = ip->get<std::string>();
  if (auto port = j.find("port"); port != j.end()) {
    if (!port->is_number_integer()) malformed(std::string(name) + ".port not an integer");
    auto v = port->get<std::int64_t>();
    if (v < 0 || v > 65535) malformed(std::string(name) + ".port out of range");
    ep.port = static_cast<std::uint16_t>(v);
  }
  return ep;
}

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key) {
  const auto& v = require(obj, key);
  if (!v.is_string()) malformed(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::int64_t require_int(const json& obj, const char* key) {
  const auto& v = require(obj, key);
  if (!v.is_number_integer()) malformed(std::string("field '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

std::string_view strip_newline(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  return line;
}

json parse_object(std::string_view body) {
  if (body.empty()) malformed("empty line");
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    malformed(std::string("bad JSON: ") + e.what());
  }
  if (!j.is_object()) malformed("line is not a JSON object");
  return j;
}

// Rejects lines that parse but are not in canonical form (extra keys,
// different key order, whitespace).
template <typename T, typename Ser>
void require_canonical(std::string_view body, const T& value, Ser ser) {
  std::string canon = ser(value);
  canon.pop_back();
  if (canon != body) malformed("line is not in canonical form");
}

int64_t days_from_civil(int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

void civil_from_days(int64_t z, int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

}  // namespace

const char* to_string(Layer layer) noexcept {
  for (const auto& [l, name] : kLayerNames)
    if (l == layer) return name;
  return "application";
}

std::optional<Layer> layer_from_string(std::string_view name) noexcept {
  for (const auto& [l, n] : kLayerNames)
    if (name == n) return l;
  return std::nullopt;
}

void validate(const NormalizedEvent& e) {
  if (e.event_id.empty()) malformed("event_id is empty");
  if (e.event_type.empty()) malformed("event_type is empty");
  if (e.severity < 0 || e.severity > kMaxSeverity) malformed("severity out of range [0,10]");
  if (e.timestamp < 0) malformed("timestamp is negative");
  for (const auto* ep : {&e.source, &e.destination})
    if (*ep && (*ep)->ip.empty()) malformed("endpoint ip is empty");
  check_text("event_id", e.event_id);
  check_text("event_type", e.event_type);
  if (e.source) check_text("source.ip", e.source->ip);
  if (e.destination) check_text("destination.ip", e.destination->ip);
  for (const auto& [k, v] : e.attributes) {
    check_text("attribute key", k);
    check_text("attribute value", v);
  }
}

void validate(const Alarm& a) {
  if (a.alarm_id.empty()) malformed("alarm_id is empty");
  if (a.rule_id.empty()) malformed("rule_id is empty");
  if (a.contributing_events.empty()) malformed("alarm has no contributing events");
  if (a.severity < 0 || a.severity > kMaxSeverity) malformed("severity out of range [0,10]");
  if (a.timestamp < 0) malformed("timestamp is negative");
  check_text("description", a.description);
  for (const auto& id : a.contributing_events) check_text("event id", id);
}

std::string serialize_event(const NormalizedEvent& e) {
  ojson j = ojson::object();
  j["event_id"] = e.event_id;
  j["timestamp"] = e.timestamp;
  j["layer"] = to_string(e.layer);
  j["event_type"] = e.event_type;
  j["source"] = endpoint_json(e.source);
  j["destination"] = endpoint_json(e.destination);
  j["severity"] = e.severity;
  ojson attrs = ojson::object();
  for (const auto& [k, v] : e.attributes) attrs[k] = v;
  j["attributes"] = std::move(attrs);
  return j.dump() + '\n';
}

NormalizedEvent deserialize_event(std::string_view line) {
  auto body = strip_newline(line);
  json j = parse_object(body);
  NormalizedEvent e;
  e.event_id = require_string(j, "event_id");
  e.timestamp = require_int(j, "timestamp");
  auto layer = layer_from_string(require_string(j, "layer"));
  if (!layer) malformed("unknown layer");
  e.layer = *layer;
  e.event_type = require_string(j, "event_type");
  e.source = endpoint_from(require(j, "source"), "source");
  e.destination = endpoint_from(require(j, "destination"), "destination");
  auto sev = require_int(j, "severity");
  if (sev < 0 || sev > kMaxSeverity) malformed("severity out of range [0,10]");
  e.severity = static_cast<int>(sev);
  const auto& attrs = require(j, "attributes");
  if (!attrs.is_object()) malformed("attributes must be an object");
  for (const auto& [k, v] : attrs.items()) {
    if (!v.is_string()) malformed("attribute values must be strings");
    e.attributes.emplace(k, v.get<std::string>());
  }
  validate(e);
  require_canonical(body, e, serialize_event);
  return e;
}

std::string serialize_alarm(const Alarm& a) {
  ojson j = ojson::object();
  j["alarm_id"] = a.alarm_id;
  j["rule_id"] = a.rule_id;
  j["timestamp"] = a.timestamp;
  j["contributing_events"] = a.contributing_events;
  j["description"] = a.description;
  j["severity"] = a.severity;
  return j.dump() + '\n';
}

Alarm deserialize_alarm(std::string_view line) {
  auto body = strip_newline(line);
  json j = parse_object(body);
  Alarm a;
  a.alarm_id = require_string(j, "alarm_id");
  a.rule_id = require_string(j, "rule_id");
  a.timestamp = require_int(j, "timestamp");
  const auto& ev = require(j, "contributing_events");
  if (!ev.is_array()) malformed("contributing_events must be an array");
  for (const auto& id : ev) {
    if (!id.is_string()) malformed("contributing event ids must be strings");
    a.contributing_events.push_back(id.get<std::string>());
  }
  a.description = require_string(j, "description");
  auto sev = require_int(j, "severity");
  if (sev < 0 || sev > kMaxSeverity) malformed("severity out of range [0,10]");
  a.severity = static_cast<int>(sev);
  validate(a);
  require_canonical(body, a, serialize_alarm);
  return a;
}

namespace {

template <typename T, typename Parse, typename Key>
StreamReadResult<T> read_stream(std::istream& in, Parse parse, Key key) {
  StreamReadResult<T> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    ++out.lines_in;
    try {
      T item = parse(line);
      if (!seen.insert(key(item)).second) {
        out.quarantined.push_back({number, line, "duplicate id " + key(item)});
        continue;
      }
      out.items.push_back(std::move(item));
    } catch (const Error& e) {
      out.quarantined.push_back({number, line, e.what()});
    }
  }
  return out;
}

}  // namespace

StreamReadResult<NormalizedEvent> read_events(std::istream& in) {
  return read_stream<NormalizedEvent>(
      in, [](const std::string& l) { return deserialize_event(l); },
      [](const NormalizedEvent& e) { return e.event_id; });
}

StreamReadResult<Alarm> read_alarms(std::istream& in) {
  return read_stream<Alarm>(
      in, [](const std::string& l) { return deserialize_alarm(l); },
      [](const Alarm& a) { return a.alarm_id; });
}

std::string quarantine_line_json(const QuarantinedLine& q) {
  ojson j = ojson::object();
  j["line"] = q.line_number;
  j["reason"] = q.reason;
  // Raw bytes may not be UTF-8; replace rather than fail.
  j["raw"] = q.raw;
  return j.dump(-1, ' ', false, json::error_handler_t::replace) + '\n';
}

bool is_valid_field_path(std::string_view path) noexcept {
  static constexpr std::array<std::string_view, 9> fixed{
      "event_id", "event_type", "layer", "severity", "timestamp",
      "source.ip", "source.port", "destination.ip", "destination.port"};
  for (auto f : fixed)
    if (path == f) return true;
  constexpr std::string_view attr = "attributes.";
  return path.size() > attr.size() && path.substr(0, attr.size()) == attr;
}

std::optional<std::string> field_value(const NormalizedEvent& e, std::string_view path) {
  if (path == "event_id") return e.event_id;
  if (path == "event_type") return e.event_type;
  if (path == "layer") return std::string(to_string(e.layer));
  if (path == "severity") return std::to_string(e.severity);
  if (path == "timestamp") return std::to_string(e.timestamp);
  auto endpoint_field = [](const std::optional<Endpoint>& ep,
                           std::string_view sub) -> std::optional<std::string> {
    if (!ep) return std::nullopt;
    if (sub == "ip") return ep->ip;
    if (sub == "port" && ep->port) return std::to_string(*ep->port);
    return std::nullopt;
  };
  if (path.starts_with("source.")) return endpoint_field(e.source, path.substr(7));
  if (path.starts_with("destination.")) return endpoint_field(e.destination, path.substr(12));
  if (path.starts_with("attributes.")) {
    auto it = e.attributes.find(std::string(path.substr(11)));
    if (it == e.attributes.end()) return std::nullopt;
    return it->second;
  }
  return std::nullopt;
}

std::optional<std::int64_t> parse_iso8601_ms(std::string_view t) noexcept {
  // YYYY-MM-DDTHH:MM:SS[.mmm]Z
  if (t.size() != 20 && t.size() != 24) return std::nullopt;
  auto num = [&](std::size_t pos, std::size_t len, int& out) {
    auto r = std::from_chars(t.data() + pos, t.data() + pos + len, out);
    return r.ec == std::errc{} && r.ptr == t.data() + pos + len;
  };
  int y, mo, d, h, mi, s, ms = 0;
  if (!num(0, 4, y) || t[4] != '-' || !num(5, 2, mo) || t[7] != '-' || !num(8, 2, d) ||
      t[10] != 'T' || !num(11, 2, h) || t[13] != ':' || !num(14, 2, mi) || t[16] != ':' ||
      !num(17, 2, s))
    return std::nullopt;
  if (t.size() == 24) {
    if (t[19] != '.' || !num(20, 3, ms)) return std::nullopt;
  }
  if (t.back() != 'Z') return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 59) return std::nullopt;
  int64_t days = days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d));
  return ((days * 24 + h) * 60 + mi) * 60'000 + s * 1000 + ms;
}

std::string format_iso8601_ms(std::int64_t ms) {
  int64_t days = ms >= 0 ? ms / 86'400'000 : -((-ms + 86'399'999) / 86'400'000);
  int64_t rem = ms - days * 86'400'000;
  int64_t y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  int h = static_cast<int>(rem / 3'600'000);
  int mi = static_cast<int>(rem / 60'000 % 60);
  int s = static_cast<int>(rem / 1000 % 60);
  int milli = static_cast<int>(rem % 1000);
  char buf[40];
  if (milli == 0)
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02d:%02d:%02dZ",
                  static_cast<long long>(y), m, d, h, mi, s);
  else
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02d:%02d:%02d.%03dZ",
                  static_cast<long long>(y), m, d, h, mi, s, milli);
  return buf;
}

}  // namespace siem
