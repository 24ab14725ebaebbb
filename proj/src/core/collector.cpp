#include "collector.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "error.hpp"

namespace siem::get {

namespace {

[[noreturn]] void config_error(const std::string& why) {
  throw Error(ErrorKind::invalid_config, why);
}

[[noreturn]] void reject(const std::string& why) {
  throw Error(ErrorKind::parse_reject, why);
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

bool valid_target(std::string_view t) {
  static const std::set<std::string_view> scalar{
      "timestamp", "event_type", "layer", "severity", "source.ip",
      "source.port", "destination.ip", "destination.port", "drop"};
  if (scalar.count(t)) return true;
  return t.starts_with("attributes.") && t.size() > 11;
}

std::optional<std::int64_t> to_int(std::string_view s) {
  std::int64_t v{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> to_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

void set_port(std::optional<Endpoint>& ep, std::string_view v) {
  auto p = to_int(v);
  if (!p || *p < 0 || *p > 65535) reject("port value '" + std::string(v) + "' invalid");
  if (!ep) ep.emplace();
  ep->port = static_cast<std::uint16_t>(*p);
}

void apply_target(NormalizedEvent& e, std::optional<std::int64_t>& ts, std::string_view target,
                  const std::string& v) {
  if (target == "drop") return;
  if (target == "timestamp") {
    if (auto iso = parse_iso8601_ms(v)) ts = *iso;
    else if (auto raw = to_int(v)) ts = *raw;
    else reject("unparseable timestamp '" + v + "'");
  } else if (target == "event_type") {
    e.event_type = v;
  } else if (target == "layer") {
    auto l = layer_from_string(v);
    if (!l) reject("unknown layer '" + v + "'");
    e.layer = *l;
  } else if (target == "severity") {
    auto s = to_int(v);
    if (!s) reject("severity '" + v + "' is not an integer");
    if (*s < 0 || *s > kMaxSeverity) reject("severity out of range");
    e.severity = static_cast<int>(*s);
  } else if (target == "source.ip") {
    if (!e.source) e.source.emplace();
    e.source->ip = v;
  } else if (target == "destination.ip") {
    if (!e.destination) e.destination.emplace();
    e.destination->ip = v;
  } else if (target == "source.port") {
    set_port(e.source, v);
  } else if (target == "destination.port") {
    set_port(e.destination, v);
  } else if (target.starts_with("attributes.")) {
    e.attributes[std::string(target.substr(11))] = v;
  }
}

}  // namespace

void validate(const Grammar& g) {
  if (g.name.empty()) config_error("grammar without a name");
  std::set<std::string> names;
  for (const auto& t : g.token_rules) {
    if (t.name.empty()) config_error("grammar '" + g.name + "': empty token name");
    if (!names.insert(t.name).second)
      config_error("grammar '" + g.name + "': duplicate token '" + t.name + "'");
    try {
      std::regex re(t.pattern);
      if (re.mark_count() > 2)
        config_error("grammar '" + g.name + "': token '" + t.name + "' has more than two groups");
    } catch (const std::regex_error& e) {
      config_error("grammar '" + g.name + "': token '" + t.name + "' bad regex: " + e.what());
    }
  }
  for (const auto& item : g.line_rule)
    if (!names.count(item.token))
      config_error("grammar '" + g.name + "': line rule uses undeclared token '" + item.token + "'");
  for (const auto& [token, target] : g.field_bindings) {
    if (!names.count(token))
      config_error("grammar '" + g.name + "': binding for undeclared token '" + token + "'");
    if (!valid_target(target))
      config_error("grammar '" + g.name + "': invalid binding target '" + target + "'");
  }
  for (const auto& [token, _] : g.value_maps)
    if (!names.count(token))
      config_error("grammar '" + g.name + "': value map for undeclared token '" + token + "'");
  for (const auto& [target, _] : g.defaults)
    if (!valid_target(target) || target == "drop")
      config_error("grammar '" + g.name + "': invalid default target '" + target + "'");
}

AdaptableParser::AdaptableParser(Grammar grammar) : grammar_(std::move(grammar)) {
  validate(grammar_);
  for (const auto& t : grammar_.token_rules) {
    // Tokens end at whitespace or end of line.
    regexes_.emplace_back("(?:" + t.pattern + ")(?=[ \\t\\r]|$)");
    group_counts_.push_back(static_cast<unsigned>(std::regex(t.pattern).mark_count()));
  }
  for (const auto& item : grammar_.line_rule) {
    auto it = std::find_if(grammar_.token_rules.begin(), grammar_.token_rules.end(),
                           [&](const TokenRule& t) { return t.name == item.token; });
    item_tokens_.push_back(static_cast<std::size_t>(it - grammar_.token_rules.begin()));
  }
}

bool AdaptableParser::match_token(std::string_view line, std::size_t token, std::size_t& pos,
                                  std::vector<Capture>& caps) const {
  while (pos < line.size() && is_space(line[pos])) ++pos;
  if (pos >= line.size()) return false;
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(line.begin() + static_cast<std::ptrdiff_t>(pos), line.end(), m,
                         regexes_[token], std::regex_constants::match_continuous))
    return false;
  if (m.length(0) == 0) return false;
  Capture c{token, {}, {}};
  switch (group_counts_[token]) {
    case 0: c.first = m.str(0); break;
    case 1: c.first = m.str(1); break;
    default:
      c.first = m.str(1);
      c.second = m.str(2);
  }
  caps.push_back(std::move(c));
  pos += static_cast<std::size_t>(m.length(0));
  return true;
}

bool AdaptableParser::match(std::string_view line, std::size_t item, std::size_t pos,
                            std::vector<Capture>& caps) const {
  if (item == item_tokens_.size()) {
    while (pos < line.size() && is_space(line[pos])) ++pos;
    return pos == line.size();
  }
  const std::size_t token = item_tokens_[item];
  const std::size_t mark = caps.size();
  auto undo = [&] { caps.resize(mark); };

  switch (grammar_.line_rule[item].repeat) {
    case Repeat::once: {
      std::size_t p = pos;
      if (match_token(line, token, p, caps) && match(line, item + 1, p, caps)) return true;
      undo();
      return false;
    }
    case Repeat::optional: {
      std::size_t p = pos;
      if (match_token(line, token, p, caps) && match(line, item + 1, p, caps)) return true;
      undo();
      return match(line, item + 1, pos, caps);
    }
    case Repeat::zero_or_more:
    case Repeat::one_or_more: {
      // Greedy: consume as many repetitions as possible, then back off.
      std::vector<std::size_t> positions{pos};
      std::vector<Capture> taken;
      std::size_t p = pos;
      while (match_token(line, token, p, taken)) positions.push_back(p);
      const std::size_t min = grammar_.line_rule[item].repeat == Repeat::one_or_more ? 1 : 0;
      for (std::size_t n = positions.size() - 1; n + 1 > min; --n) {
        caps.insert(caps.end(), taken.begin(), taken.begin() + static_cast<std::ptrdiff_t>(n));
        if (match(line, item + 1, positions[n], caps)) return true;
        undo();
        if (n == 0) break;
      }
      return false;
    }
  }
  return false;
}

NormalizedEvent AdaptableParser::parse(std::string_view raw, const SourceContext& ctx) const {
  if (item_tokens_.empty()) reject("grammar '" + grammar_.name + "' has an empty line rule");
  if (!raw.empty() && raw.back() == '\n') raw.remove_suffix(1);
  std::vector<Capture> caps;
  if (!match(raw, 0, 0, caps)) reject("line does not match grammar '" + grammar_.name + "'");

  NormalizedEvent e;
  e.layer = ctx.layer;
  std::optional<std::int64_t> ts = ctx.timestamp;
  for (const auto& [target, value] : grammar_.defaults) apply_target(e, ts, target, value);

  std::map<std::string, std::string> unbound;
  for (const auto& c : caps) {
    const auto& name = grammar_.token_rules[c.token].name;
    if (group_counts_[c.token] == 2) {
      e.attributes[c.first] = c.second;
      continue;
    }
    std::string value = c.first;
    if (auto vm = grammar_.value_maps.find(name); vm != grammar_.value_maps.end()) {
      if (auto hit = vm->second.find(value); hit != vm->second.end()) value = hit->second;
    }
    if (auto b = grammar_.field_bindings.find(name); b != grammar_.field_bindings.end()) {
      apply_target(e, ts, b->second, value);
    } else {
      auto [it, fresh] = unbound.emplace(name, value);
      if (!fresh) it->second += "," + value;
    }
  }
  for (auto& [k, v] : unbound) e.attributes[k] = std::move(v);

  if (!ts) reject("no timestamp bound and none supplied by the source");
  e.timestamp = *ts;
  if (e.event_type.empty()) reject("no event_type bound");
  e.event_id = ctx.stream_id + "-" + std::to_string(ctx.line_number);
  try {
    siem::validate(e);
  } catch (const Error& err) {
    reject(err.what());
  }
  return e;
}

NormalizedEvent parse_line(const Grammar& grammar, std::string_view raw,
                           const SourceContext& context) {
  return AdaptableParser(grammar).parse(raw, context);
}

// ---------------------------------------------------------------------------
// Probes

namespace {

bool compare(const std::string& actual, Comparator op, const std::string& expected) {
  auto a = to_double(actual);
  auto b = to_double(expected);
  if (a && b) {
    switch (op) {
      case Comparator::eq: return *a == *b;
      case Comparator::ne: return *a != *b;
      case Comparator::lt: return *a < *b;
      case Comparator::le: return *a <= *b;
      case Comparator::gt: return *a > *b;
      case Comparator::ge: return *a >= *b;
    }
  }
  switch (op) {
    case Comparator::eq: return actual == expected;
    case Comparator::ne: return actual != expected;
    default: return false;  // ordering needs numbers on both sides
  }
}

std::string scratch_key(const std::string& event_type, const std::string& field) {
  return event_type + "/" + field;
}

std::optional<double> current_rate(const ProbeState& state, const NormalizedEvent& e,
                                   const std::string& field) {
  auto raw = field_value(e, field);
  if (!raw) return std::nullopt;
  auto v = to_double(*raw);
  if (!v) return std::nullopt;
  auto it = state.scratch.find(scratch_key(e.event_type, field));
  if (it == state.scratch.end()) return std::nullopt;
  const std::int64_t dt = e.timestamp - it->second.at;
  if (dt <= 0) return std::nullopt;
  return (*v - it->second.value) / (static_cast<double>(dt) / 1000.0);
}

bool enabled(const Guard& g, const ProbeState& state, const NormalizedEvent& e) {
  if (g.event_type && e.event_type != *g.event_type) return false;
  for (const auto& c : g.conditions) {
    auto v = field_value(e, c.field);
    if (!v || !compare(*v, c.op, c.value)) return false;
  }
  for (const auto& r : g.rates) {
    auto rate = current_rate(state, e, r.field);
    if (!rate || !(*rate > r.threshold)) return false;
  }
  return true;
}

// A guard flattened into atomic constraints over named variables. Rates
// become the variable "rate:<field>".
struct Atom {
  std::string var;
  Comparator op;
  std::string value;
};

std::vector<Atom> atoms_of(const Guard& g) {
  std::vector<Atom> out;
  if (g.event_type) out.push_back({"event_type", Comparator::eq, *g.event_type});
  for (const auto& c : g.conditions) out.push_back({c.field, c.op, c.value});
  for (const auto& r : g.rates) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, r.threshold);
    out.push_back({"rate:" + r.field, Comparator::gt, std::string(buf, res.ptr)});
  }
  return out;
}

std::string num_str(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool satisfiable(const std::vector<const Atom*>& atoms) {
  std::vector<std::string> candidates;
  std::vector<double> numbers;
  for (const auto* a : atoms) {
    candidates.push_back(a->value);
    if (auto d = to_double(a->value)) numbers.push_back(*d);
  }
  candidates.push_back("\x01<unmatched>");
  std::sort(numbers.begin(), numbers.end());
  numbers.erase(std::unique(numbers.begin(), numbers.end()), numbers.end());
  if (!numbers.empty()) {
    candidates.push_back(num_str(numbers.front() - 1.0));
    candidates.push_back(num_str(numbers.back() + 1.0));
    for (std::size_t i = 0; i + 1 < numbers.size(); ++i)
      candidates.push_back(num_str(numbers[i] + (numbers[i + 1] - numbers[i]) / 2));
  }
  for (const auto& c : candidates) {
    bool all = true;
    for (const auto* a : atoms)
      if (!compare(c, a->op, a->value)) {
        all = false;
        break;
      }
    if (all) return true;
  }
  return false;
}

}  // namespace

bool condition_holds(const FieldCondition& c, const NormalizedEvent& e) {
  auto v = field_value(e, c.field);
  return v && compare(*v, c.op, c.value);
}

bool guards_overlap(const Guard& a, const Guard& b) {
  auto atoms = atoms_of(a);
  auto more = atoms_of(b);
  atoms.insert(atoms.end(), more.begin(), more.end());
  std::map<std::string, std::vector<const Atom*>> by_var;
  for (const auto& at : atoms) by_var[at.var].push_back(&at);
  for (const auto& [_, list] : by_var)
    if (!satisfiable(list)) return false;
  return true;
}

void validate(const SecurityProbe& p) {
  if (p.probe_id.empty()) config_error("probe without an id");
  std::set<std::string> states(p.states.begin(), p.states.end());
  if (states.size() != p.states.size()) config_error("probe '" + p.probe_id + "': duplicate state");
  if (!states.count(p.initial))
    config_error("probe '" + p.probe_id + "': initial state '" + p.initial + "' not declared");
  bool emits = false;
  for (const auto& t : p.transitions) {
    if (!states.count(t.from) || !states.count(t.to))
      config_error("probe '" + p.probe_id + "': transition uses undeclared state");
    for (const auto& c : t.guard.conditions)
      if (!is_valid_field_path(c.field))
        config_error("probe '" + p.probe_id + "': unknown field '" + c.field + "'");
    for (const auto& r : t.guard.rates)
      if (!is_valid_field_path(r.field))
        config_error("probe '" + p.probe_id + "': unknown field '" + r.field + "'");
    if (t.emit) {
      emits = true;
      if (t.emit->event_type.empty())
        config_error("probe '" + p.probe_id + "': emit template without event_type");
      if (t.emit->severity < 0 || t.emit->severity > kMaxSeverity)
        config_error("probe '" + p.probe_id + "': emit severity out of range");
    }
  }
  if (!emits) config_error("probe '" + p.probe_id + "' never emits");
  for (std::size_t i = 0; i < p.transitions.size(); ++i)
    for (std::size_t j = i + 1; j < p.transitions.size(); ++j) {
      const auto& a = p.transitions[i];
      const auto& b = p.transitions[j];
      if (a.from == b.from && guards_overlap(a.guard, b.guard))
        throw Error(ErrorKind::nondeterministic_probe,
                    "probe '" + p.probe_id + "': transitions " + std::to_string(i) + " and " +
                        std::to_string(j) + " from state '" + a.from +
                        "' can be enabled by the same event");
    }
}

ProbeState initial_state(const SecurityProbe& probe) {
  ProbeState s;
  s.current_state = probe.initial;
  return s;
}

StepResult probe_step(const SecurityProbe& probe, const ProbeState& state,
                      const NormalizedEvent& event) {
  const Transition* fired = nullptr;
  for (const auto& t : probe.transitions) {
    if (t.from != state.current_state || !enabled(t.guard, state, event)) continue;
    if (fired)
      throw Error(ErrorKind::nondeterministic_probe,
                  "probe '" + probe.probe_id + "': two transitions enabled by " + event.event_id);
    fired = &t;
  }

  StepResult out{state, {}};
  out.state.last_timestamp = event.timestamp;
  for (const auto& t : probe.transitions)
    for (const auto& r : t.guard.rates) {
      auto raw = field_value(event, r.field);
      if (!raw) continue;
      if (auto v = to_double(*raw))
        out.state.scratch[scratch_key(event.event_type, r.field)] = {*v, event.timestamp};
    }
  if (!fired) return out;

  out.state.current_state = fired->to;
  if (fired->emit) {
    const auto& tpl = *fired->emit;
    NormalizedEvent e;
    e.event_id = probe.probe_id + "-" + std::to_string(++out.state.emitted);
    e.timestamp = event.timestamp;
    e.layer = tpl.layer;
    e.event_type = tpl.event_type;
    e.source = event.source;
    e.destination = event.destination;
    e.severity = tpl.severity;
    e.attributes = tpl.attributes;
    e.attributes["probe"] = probe.probe_id;
    e.attributes["trigger_event"] = event.event_id;
    siem::validate(e);
    out.emitted.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Collector

CollectorResult run_collector(const std::vector<Grammar>& grammars,
                              const std::vector<SecurityProbe>& probes,
                              const std::vector<RawStream>& streams) {
  std::map<std::string, AdaptableParser> parsers;
  for (const auto& g : grammars)
    if (!parsers.emplace(g.name, AdaptableParser(g)).second)
      config_error("duplicate grammar '" + g.name + "'");
  std::set<std::string> probe_ids;
  for (const auto& p : probes) {
    validate(p);
    if (!probe_ids.insert(p.probe_id).second) config_error("duplicate probe '" + p.probe_id + "'");
  }

  CollectorResult result;
  struct Arrival {
    NormalizedEvent event;
    std::size_t stream;
    std::size_t line;
  };
  std::vector<Arrival> parsed;
  std::set<std::string> stream_ids;
  for (std::size_t s = 0; s < streams.size(); ++s) {
    const auto& stream = streams[s];
    if (!stream_ids.insert(stream.stream_id).second)
      config_error("duplicate stream '" + stream.stream_id + "'");
    auto it = parsers.find(stream.grammar);
    if (it == parsers.end())
      config_error("stream '" + stream.stream_id + "' uses unknown grammar '" + stream.grammar + "'");
    for (std::size_t i = 0; i < stream.lines.size(); ++i) {
      ++result.lines_in;
      SourceContext ctx{stream.stream_id, stream.layer, i + 1, std::nullopt};
      try {
        parsed.push_back({it->second.parse(stream.lines[i], ctx), s, i});
      } catch (const Error& e) {
        result.quarantined.push_back({stream.stream_id, {i + 1, stream.lines[i], e.what()}});
      }
    }
  }
  result.events_parsed = parsed.size();
  std::stable_sort(parsed.begin(), parsed.end(), [](const Arrival& a, const Arrival& b) {
    return a.event.timestamp < b.event.timestamp;
  });

  std::vector<ProbeState> states;
  for (const auto& p : probes) states.push_back(initial_state(p));
  for (auto& arrival : parsed) {
    result.events.push_back(arrival.event);
    for (std::size_t p = 0; p < probes.size(); ++p) {
      auto step = probe_step(probes[p], states[p], arrival.event);
      states[p] = std::move(step.state);
      for (auto& e : step.emitted) {
        result.events.push_back(std::move(e));
        ++result.events_emitted;
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Config documents

namespace {

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

Comparator comparator_from(const std::string& s) {
  if (s == "==" || s == "eq") return Comparator::eq;
  if (s == "!=" || s == "ne") return Comparator::ne;
  if (s == "<" || s == "lt") return Comparator::lt;
  if (s == "<=" || s == "le") return Comparator::le;
  if (s == ">" || s == "gt") return Comparator::gt;
  if (s == ">=" || s == "ge") return Comparator::ge;
  config_error("unknown comparator '" + s + "'");
}

Layer layer_or_throw(const std::string& s) {
  auto l = layer_from_string(s);
  if (!l) config_error("unknown layer '" + s + "'");
  return *l;
}

std::string scalar_string(const nlohmann::json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

Grammar grammar_from_json(const nlohmann::json& j) {
  try {
    Grammar g;
    g.name = j.at("name").get<std::string>();
    for (const auto& t : j.at("tokens"))
      g.token_rules.push_back({t.at("name").get<std::string>(), t.at("pattern").get<std::string>()});
    for (const auto& item : j.at("line")) {
      auto s = item.get<std::string>();
      LineItem li{s, Repeat::once};
      if (!s.empty()) {
        switch (s.back()) {
          case '?': li.repeat = Repeat::optional; break;
          case '*': li.repeat = Repeat::zero_or_more; break;
          case '+': li.repeat = Repeat::one_or_more; break;
          default: break;
        }
        if (li.repeat != Repeat::once) li.token.pop_back();
      }
      g.line_rule.push_back(std::move(li));
    }
    g.field_bindings = get_or(j, "bindings", std::map<std::string, std::string>{});
    g.value_maps = get_or(j, "value_maps", std::map<std::string, std::map<std::string, std::string>>{});
    g.defaults = get_or(j, "defaults", std::map<std::string, std::string>{});
    return g;
  } catch (const nlohmann::json::exception& e) {
    config_error(std::string("grammar document: ") + e.what());
  }
}

SecurityProbe probe_from_json(const nlohmann::json& j) {
  try {
    SecurityProbe p;
    p.probe_id = j.at("id").get<std::string>();
    p.states = j.at("states").get<std::vector<std::string>>();
    p.initial = j.at("initial").get<std::string>();
    for (const auto& t : j.at("transitions")) {
      Transition tr;
      tr.from = t.at("from").get<std::string>();
      tr.to = t.at("to").get<std::string>();
      if (auto g = t.find("guard"); g != t.end()) {
        if (auto et = g->find("event_type"); et != g->end()) tr.guard.event_type = et->get<std::string>();
        for (const auto& c : g->value("conditions", nlohmann::json::array()))
          tr.guard.conditions.push_back({c.at("field").get<std::string>(),
                                         comparator_from(c.at("op").get<std::string>()),
                                         scalar_string(c.at("value"))});
        for (const auto& r : g->value("rates", nlohmann::json::array()))
          tr.guard.rates.push_back({r.at("field").get<std::string>(), r.at("gt").get<double>()});
      }
      if (auto e = t.find("emit"); e != t.end() && !e->is_null()) {
        EventTemplate tpl;
        tpl.event_type = e->at("event_type").get<std::string>();
        tpl.layer = layer_or_throw(get_or<std::string>(*e, "layer", "application"));
        tpl.severity = get_or(*e, "severity", 5);
        tpl.attributes = get_or(*e, "attributes", std::map<std::string, std::string>{});
        tr.emit = std::move(tpl);
      }
      p.transitions.push_back(std::move(tr));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    config_error(std::string("probe document: ") + e.what());
  }
}

CollectorConfig collector_config_from_json(const nlohmann::json& j) {
  CollectorConfig cfg;
  try {
    for (const auto& g : j.value("grammars", nlohmann::json::array()))
      cfg.grammars.push_back(grammar_from_json(g));
    for (const auto& p : j.value("probes", nlohmann::json::array()))
      cfg.probes.push_back(probe_from_json(p));
    for (const auto& s : j.value("streams", nlohmann::json::array()))
      cfg.streams.push_back({s.at("id").get<std::string>(), s.at("grammar").get<std::string>(),
                             layer_or_throw(get_or<std::string>(s, "layer", "application")),
                             s.at("path").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    config_error(std::string("collector document: ") + e.what());
  }
  for (const auto& g : cfg.grammars) validate(g);
  for (const auto& p : cfg.probes) validate(p);
  return cfg;
}

}  // namespace siem::get
