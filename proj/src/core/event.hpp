#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace siem {

enum class Layer {
  physical_sensor,
  logical_access,
  physical_access,
  network,
  application,
};

const char* to_string(Layer layer) noexcept;
std::optional<Layer> layer_from_string(std::string_view name) noexcept;

struct Endpoint {
  std::string ip;
  std::optional<std::uint16_t> port;

  bool operator==(const Endpoint&) const = default;
};

/// Common event format exchanged between the collector, the correlator and the
/// decision stages. Immutable once built; copy freely.
struct NormalizedEvent {
  std::string event_id;
  std::int64_t timestamp = 0;  // UTC milliseconds since epoch
  Layer layer = Layer::application;
  std::string event_type;
  std::optional<Endpoint> source;
  std::optional<Endpoint> destination;
  int severity = 0;  // 0..10
  std::map<std::string, std::string> attributes;

  bool operator==(const NormalizedEvent&) const = default;
};

struct Alarm {
  std::string alarm_id;
  std::string rule_id;
  std::int64_t timestamp = 0;  // detection time
  std::vector<std::string> contributing_events;
  std::string description;
  int severity = 0;

  bool operator==(const Alarm&) const = default;
};

constexpr int kMaxSeverity = 10;

/// Throws Error(malformed_event) when the event breaks a field invariant.
void validate(const NormalizedEvent& event);
void validate(const Alarm& alarm);

/// One canonical JSON object followed by '\n'. Key order is fixed:
/// event_id, timestamp, layer, event_type, source, destination, severity,
/// attributes.
std::string serialize_event(const NormalizedEvent& event);

/// Accepts exactly the bytes serialize_event would produce (a trailing '\n'
/// is optional). Anything else raises Error(malformed_event).
NormalizedEvent deserialize_event(std::string_view line);

/// Same discipline as events; key order alarm_id, rule_id, timestamp,
/// contributing_events, description, severity.
std::string serialize_alarm(const Alarm& alarm);
Alarm deserialize_alarm(std::string_view line);

struct QuarantinedLine {
  std::size_t line_number = 0;  // 1-based
  std::string raw;
  std::string reason;
};

// Result of reading an event/alarm stream: lines_in == items + quarantined.
template <typename T>
struct StreamReadResult {
  std::vector<T> items;
  std::vector<QuarantinedLine> quarantined;
  std::size_t lines_in = 0;
};

/// Reads a JSON-lines event stream. Malformed lines and duplicate event ids
/// are quarantined, never dropped silently. Blank trailing line is ignored.
StreamReadResult<NormalizedEvent> read_events(std::istream& in);
StreamReadResult<Alarm> read_alarms(std::istream& in);

std::string quarantine_line_json(const QuarantinedLine& q);

/// Looks up a field by dotted path: event_id, event_type, layer, severity,
/// timestamp, source.ip, source.port, destination.ip, destination.port or
/// attributes.<key>. Returns nullopt when the field is absent.
std::optional<std::string> field_value(const NormalizedEvent& event,
                                       std::string_view path);
bool is_valid_field_path(std::string_view path) noexcept;

// ISO-8601 "YYYY-MM-DDTHH:MM:SS[.mmm]Z" <-> epoch milliseconds.
std::optional<std::int64_t> parse_iso8601_ms(std::string_view text) noexcept;
std::string format_iso8601_ms(std::int64_t ms);

}  // namespace siem
