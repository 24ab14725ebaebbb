#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace siem::policy {

// ---------------------------------------------------------------------------
// Abstract (topology independent) policies

enum class Effect { permit, deny };
enum class Element { subject, object, environment };

using AttributeMap = std::map<std::string, std::string>;

inline constexpr std::array<std::string_view, 3> kSubjectAttributes{"ID", "Role", "Organization"};
inline constexpr std::array<std::string_view, 3> kObjectAttributes{"ID", "Type", "Owner"};
inline constexpr std::array<std::string_view, 3> kEnvironmentAttributes{"Time", "Location", "Network"};

std::span<const std::string_view> attribute_names(Element element) noexcept;
const char* to_string(Element element) noexcept;
const char* to_string(Effect effect) noexcept;

inline constexpr std::string_view kReach = "reach";

struct AbstractPolicy {
  std::string policy_id;
  AttributeMap subject;
  std::string action{kReach};
  AttributeMap object;
  AttributeMap environment;
  Effect effect = Effect::permit;

  const AttributeMap& attributes(Element element) const;
  bool operator==(const AbstractPolicy&) const = default;
};

/// Throws Error(invalid_config): needs an id, a subject attribute, an action,
/// and only known attribute names.
void validate(const AbstractPolicy& policy);

/// Trims values, drops empty-valued attributes, lower-cases the action.
/// Idempotent.
AbstractPolicy normalize(const AbstractPolicy& policy);

// ---------------------------------------------------------------------------
// Concrete filtering rules

enum class Protocol { TCP, UDP, ANY };
enum class RuleAction { permit, deny };

const char* to_string(Protocol proto) noexcept;
const char* to_string(RuleAction action) noexcept;

std::optional<std::uint32_t> parse_ipv4(std::string_view text) noexcept;
std::string format_ipv4(std::uint32_t addr);

struct Ipv4Prefix {
  std::uint32_t addr = 0;
  std::uint8_t length = 0;  // 0 = wildcard, 32 = single host

  static Ipv4Prefix any() { return {}; }
  static Ipv4Prefix host(std::uint32_t a) { return {a, 32}; }
  bool contains(std::uint32_t ip) const noexcept;
  bool operator==(const Ipv4Prefix&) const = default;
  auto operator<=>(const Ipv4Prefix&) const = default;
};

/// Ports as a union of closed ranges. Empty range list means wildcard.
struct PortSet {
  std::vector<std::pair<std::uint16_t, std::uint16_t>> ranges;

  static PortSet any() { return {}; }
  static PortSet single(std::uint16_t p) { return {{{p, p}}}; }
  static PortSet list(const std::vector<std::uint16_t>& ports);
  bool is_any() const noexcept { return ranges.empty(); }
  bool contains(std::uint16_t port) const noexcept;
  bool operator==(const PortSet&) const = default;
  auto operator<=>(const PortSet&) const = default;
};

struct FilteringRule {
  Ipv4Prefix src_ip;
  PortSet src_port;
  Ipv4Prefix dst_ip;
  PortSet dst_port;
  Protocol proto = Protocol::ANY;
  RuleAction action = RuleAction::permit;

  bool operator==(const FilteringRule&) const = default;
  auto operator<=>(const FilteringRule&) const = default;
};

/// A fully concrete packet of the declared universe.
struct Packet {
  std::uint32_t src_ip = 0;
  std::uint16_t src_port = 0;
  std::uint32_t dst_ip = 0;
  std::uint16_t dst_port = 0;
  Protocol proto = Protocol::TCP;  // TCP or UDP

  bool operator==(const Packet&) const = default;
  auto operator<=>(const Packet&) const = default;
};

bool rule_matches(const FilteringRule& rule, const Packet& packet) noexcept;

nlohmann::ordered_json rule_to_json(const FilteringRule& rule);
FilteringRule rule_from_json(const nlohmann::json& j);
std::string describe(const FilteringRule& rule);

// ---------------------------------------------------------------------------
// System description

inline constexpr std::string_view kFiltering = "filtering";
inline constexpr std::string_view kRouting = "routing";
inline constexpr std::string_view kEndpoint = "endpoint";

struct Host {
  std::string id;
  std::vector<std::uint32_t> ips;
  std::string role;
  std::string organization;
  std::string owner;
  std::string subnet;
  std::set<std::string> capabilities;  // always contains "endpoint"
};

struct Device {
  std::string id;
  std::set<std::string> capabilities;
  std::string subnet;
};

struct Service {
  std::string host_id;
  std::string name;
  Protocol proto = Protocol::TCP;  // TCP or UDP
  std::vector<std::uint16_t> ports;
};

struct User {
  std::string id;
  std::string role;
  std::string organization;
  std::string host_id;
};

struct SystemDescription {
  std::vector<Host> hosts;
  std::vector<Device> devices;
  std::vector<Service> services;
  std::vector<User> users;
  std::vector<AttributeMap> environments;
  std::vector<std::pair<std::string, std::string>> links;
  std::vector<std::uint16_t> client_ports{49152};
  std::map<std::string, std::vector<FilteringRule>> firewalls;  // deployed rules
  std::size_t path_limit = 64;

  const Host* find_host(std::string_view id) const;
  bool has_node(std::string_view id) const;
  std::set<std::string> capabilities(std::string_view node) const;
  /// Nodes carrying the filtering capability, sorted.
  std::vector<std::string> firewall_nodes() const;
};

/// Throws Error(invalid_system_description) on dangling links, services on
/// undeclared hosts, firewall rules on nodes without filtering capability,
/// duplicate ids, or nodes sharing a subnet label that are not connected.
void validate(const SystemDescription& sd);

SystemDescription system_from_json(const nlohmann::json& j);
nlohmann::ordered_json system_to_json(const SystemDescription& sd);

std::vector<AbstractPolicy> policies_from_json(const nlohmann::json& j);
nlohmann::ordered_json policy_to_json(const AbstractPolicy& p);

// ---------------------------------------------------------------------------
// Attribute universe and anomaly / conflict detection

struct SubjectEntity {
  AttributeMap attributes;
  std::string host_id;  // where its traffic originates
};

struct ObjectEntity {
  AttributeMap attributes;
  std::size_t service = 0;  // index into SystemDescription::services
};

/// Every concrete entity a policy condition can select. Subjects are the
/// declared hosts and users, objects are the declared services, environments
/// are declared or, when none are declared, synthesised from the values the
/// policies mention (plus an "unset" value per attribute).
struct Universe {
  std::vector<SubjectEntity> subjects;
  std::vector<ObjectEntity> objects;
  std::vector<AttributeMap> environments;
};

Universe build_universe(const SystemDescription& sd, const std::vector<AbstractPolicy>& policies);

bool entity_matches(const AttributeMap& condition, const AttributeMap& entity) noexcept;

struct Scope {
  std::vector<bool> subjects;
  std::vector<bool> objects;
  std::vector<bool> environments;

  bool empty() const noexcept;
  bool overlaps(const Scope& other) const noexcept;
  bool subset_of(const Scope& other) const noexcept;
  bool operator==(const Scope&) const = default;
};

Scope scope_of(const AbstractPolicy& policy, const Universe& universe);

enum class AnomalyKind { equivalence, redundancy };

const char* to_string(AnomalyKind kind) noexcept;

struct PolicyAnomaly {
  AnomalyKind kind;
  // equivalence: the two ids in lexicographic order.
  // redundancy: `first` is subsumed by `second`.
  std::string first;
  std::string second;

  bool operator==(const PolicyAnomaly&) const = default;
  auto operator<=>(const PolicyAnomaly&) const = default;
};

std::vector<PolicyAnomaly> detect_policy_anomalies(const std::vector<AbstractPolicy>& policies,
                                                   const Universe& universe);

struct PolicyConflict {
  std::string first;  // lexicographically smaller id
  std::string second;

  bool operator==(const PolicyConflict&) const = default;
  auto operator<=>(const PolicyConflict&) const = default;
};

/// Same action, different effect, overlapping subject, object and
/// environment scopes.
std::vector<PolicyConflict> detect_conflicts(const std::vector<AbstractPolicy>& policies,
                                             const Universe& universe);

}  // namespace siem::policy
