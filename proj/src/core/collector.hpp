#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "event.hpp"

// Generic Event Translation: grammar-driven adaptable parsers turn raw lines
// into NormalizedEvents, security probes (state machines) watch the parsed
// stream and emit derived events.
namespace siem::get {

// ---------------------------------------------------------------------------
// Adaptable parsers

struct TokenRule {
  std::string name;
  // ECMAScript regex. No capture group: the token value is the whole match.
  // One group: the value is group 1. Two groups: key/value token, stored as
  // attributes[group1] = group2.
  std::string pattern;
};

enum class Repeat { once, optional, zero_or_more, one_or_more };

struct LineItem {
  std::string token;
  Repeat repeat = Repeat::once;
};

struct Grammar {
  std::string name;
  std::vector<TokenRule> token_rules;
  std::vector<LineItem> line_rule;  // whitespace-separated token sequence
  // token -> target: timestamp | event_type | layer | severity | source.ip |
  // source.port | destination.ip | destination.port | attributes.<key> | drop
  std::map<std::string, std::string> field_bindings;
  std::map<std::string, std::map<std::string, std::string>> value_maps;
  std::map<std::string, std::string> defaults;  // target -> constant
};

/// Where a raw line came from; fills in what the grammar does not bind.
struct SourceContext {
  std::string stream_id;
  Layer layer = Layer::application;
  std::size_t line_number = 0;
  std::optional<std::int64_t> timestamp;
};

/// Throws Error(invalid_config) when the grammar breaks an invariant.
void validate(const Grammar& grammar);

class AdaptableParser {
 public:
  explicit AdaptableParser(Grammar grammar);

  const Grammar& grammar() const { return grammar_; }

  /// Throws Error(parse_reject) when the line does not match the line rule or
  /// the bound values do not form a valid event.
  NormalizedEvent parse(std::string_view raw, const SourceContext& context) const;

 private:
  struct Capture {
    std::size_t token;
    std::string first;
    std::string second;
  };
  bool match(std::string_view line, std::size_t item, std::size_t pos,
             std::vector<Capture>& caps) const;
  bool match_token(std::string_view line, std::size_t token, std::size_t& pos,
                   std::vector<Capture>& caps) const;

  Grammar grammar_;
  std::vector<std::regex> regexes_;
  std::vector<unsigned> group_counts_;
  std::vector<std::size_t> item_tokens_;
};

NormalizedEvent parse_line(const Grammar& grammar, std::string_view raw,
                           const SourceContext& context);

// ---------------------------------------------------------------------------
// Security probes

enum class Comparator { eq, ne, lt, le, gt, ge };

struct FieldCondition {
  std::string field;  // event field path, see field_value()
  Comparator op = Comparator::eq;
  std::string value;
};

// Satisfied when (value - previous value) / elapsed seconds > threshold, for
// consecutive events of the same event_type carrying `field`.
struct RateCondition {
  std::string field;
  double threshold = 0.0;
};

/// Numeric comparison when both sides parse as numbers, otherwise string
/// equality (ordering operators are false on non-numbers). Missing field is
/// false.
bool condition_holds(const FieldCondition& condition, const NormalizedEvent& event);

struct Guard {
  std::optional<std::string> event_type;
  std::vector<FieldCondition> conditions;
  std::vector<RateCondition> rates;
};

struct EventTemplate {
  std::string event_type;
  Layer layer = Layer::application;
  int severity = 5;
  std::map<std::string, std::string> attributes;
};

struct Transition {
  std::string from;
  std::string to;
  Guard guard;
  std::optional<EventTemplate> emit;
};

struct SecurityProbe {
  std::string probe_id;
  std::vector<std::string> states;
  std::string initial;
  std::vector<Transition> transitions;
};

struct RateSample {
  double value = 0.0;
  std::int64_t at = 0;

  bool operator==(const RateSample&) const = default;
};

struct ProbeState {
  std::string current_state;
  std::map<std::string, RateSample> scratch;  // "<event_type>/<field>"
  std::int64_t last_timestamp = 0;
  std::uint64_t emitted = 0;

  bool operator==(const ProbeState&) const = default;
};

/// Structural checks plus the determinism check: for every state, no two
/// outgoing guards can be satisfied by the same event. The check enumerates
/// witness values built from the guards' own constants, which is exact for
/// conjunctions of comparisons against constants.
/// Throws Error(nondeterministic_probe) or Error(invalid_config).
void validate(const SecurityProbe& probe);

/// True when some single event could enable both guards.
bool guards_overlap(const Guard& a, const Guard& b);

ProbeState initial_state(const SecurityProbe& probe);

struct StepResult {
  ProbeState state;
  std::vector<NormalizedEvent> emitted;
};

StepResult probe_step(const SecurityProbe& probe, const ProbeState& state,
                      const NormalizedEvent& event);

// ---------------------------------------------------------------------------
// Collector

struct RawStream {
  std::string stream_id;
  std::string grammar;
  Layer layer = Layer::application;
  std::vector<std::string> lines;
};

struct StreamQuarantine {
  std::string stream_id;
  QuarantinedLine line;
};

struct CollectorResult {
  std::vector<NormalizedEvent> events;  // parsed events plus probe emissions
  std::vector<StreamQuarantine> quarantined;
  std::size_t lines_in = 0;
  std::size_t events_parsed = 0;
  std::size_t events_emitted = 0;
};

/// Parses each stream with its grammar, merges by timestamp (ties keep
/// stream order, then line order), then feeds the merged stream through
/// every probe. Emissions follow their trigger directly.
CollectorResult run_collector(const std::vector<Grammar>& grammars,
                              const std::vector<SecurityProbe>& probes,
                              const std::vector<RawStream>& streams);

// Declarative config documents.
Grammar grammar_from_json(const nlohmann::json& j);
SecurityProbe probe_from_json(const nlohmann::json& j);

struct StreamSpec {
  std::string stream_id;
  std::string grammar;
  Layer layer = Layer::application;
  std::string path;
};

struct CollectorConfig {
  std::vector<Grammar> grammars;
  std::vector<SecurityProbe> probes;
  std::vector<StreamSpec> streams;
};

CollectorConfig collector_config_from_json(const nlohmann::json& j);

}  // namespace siem::get
