#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "policy.hpp"

// Refinement of reach-policies into per-firewall rules and comparison of
// generated against deployed rules through reachability matrices.
namespace siem::reach {

using policy::FilteringRule;
using policy::Protocol;
using policy::SystemDescription;

struct TopologyNode {
  std::string id;
  bool is_host = false;
  bool filtering = false;
  std::vector<std::uint32_t> ips;
};

struct TopologyGraph {
  std::vector<TopologyNode> nodes;            // sorted by id
  std::vector<std::vector<std::size_t>> adj;  // neighbour indices, sorted

  std::optional<std::size_t> index_of(std::string_view id) const;
};

/// Throws Error(invalid_system_description).
TopologyGraph build_topology(const SystemDescription& sd);

/// Simple paths between two nodes, neighbours visited in id order. Throws
/// Error(path_limit_exceeded) when more than `limit` exist.
std::vector<std::vector<std::size_t>> simple_paths(const TopologyGraph& g, std::size_t from,
                                                   std::size_t to, std::size_t limit);

struct SourceKey {
  std::uint32_t ip = 0;
  std::uint16_t port = 0;
  auto operator<=>(const SourceKey&) const = default;
};

struct DestKey {
  std::uint32_t ip = 0;
  std::uint16_t port = 0;
  Protocol proto = Protocol::TCP;
  auto operator<=>(const DestKey&) const = default;
};

/// The finite packet universe of a system description: sources are declared
/// host IPs times client ports, destinations are declared services.
struct PacketUniverse {
  std::vector<SourceKey> sources;
  std::vector<DestKey> destinations;
};

PacketUniverse packet_universe(const SystemDescription& sd);

/// First-match decision, implicit trailing deny.
bool permits(const std::vector<FilteringRule>& rules, const policy::Packet& p);

/// Index of the first rule matching `p`, if any.
std::optional<std::size_t> first_match(const std::vector<FilteringRule>& rules,
                                       const policy::Packet& p);

policy::Packet packet(const SourceKey& s, const DestKey& d);

enum class FindingKind { anomaly, security_issue, not_enforceable };

const char* to_string(FindingKind kind) noexcept;

struct Finding {
  FindingKind kind = FindingKind::anomaly;
  std::string firewall;              // empty for not_enforceable
  std::optional<SourceKey> source;   // matrix cell
  std::optional<DestKey> destination;
  std::string policy_id;             // not_enforceable only
  std::string subject;               // host ids, not_enforceable only
  std::string object;
  std::vector<std::string> path;     // the uncovered path
  std::string detail;
};

struct Refinement {
  std::map<std::string, std::vector<FilteringRule>> generated;  // every firewall node, maybe empty
  std::vector<Finding> not_enforceable;
};

/// Permit reach-policies generate rules on every filtering node of every
/// simple subject-to-object path. Deny policies in `policies` carve their
/// (subject host, service) pairs out of the permits. Throws
/// Error(unknown_endpoint) or Error(path_limit_exceeded).
Refinement refine(const std::vector<policy::AbstractPolicy>& policies, const TopologyGraph& g,
                  const SystemDescription& sd);

/// Concrete, permit-only rules equivalent (first-match, default deny) to
/// `rules` over the packet universe of `sd`, sorted by (source, destination).
std::vector<FilteringRule> expand(const std::vector<FilteringRule>& rules,
                                  const SystemDescription& sd);

struct ReachabilityMatrix {
  std::vector<SourceKey> rows;
  std::vector<DestKey> cols;
  std::vector<std::vector<int>> cells;  // rows x cols

  bool operator==(const ReachabilityMatrix&) const = default;
};

struct Composition {
  std::string firewall;
  ReachabilityMatrix generated;
  ReachabilityMatrix deployed;
};

/// Both arguments must be expanded.
Composition compose(const std::vector<FilteringRule>& generated,
                    const std::vector<FilteringRule>& deployed, const std::string& firewall);

struct Analysis {
  ReachabilityMatrix delta;  // cells in {-1, 0, 1}
  std::vector<Finding> findings;
};

/// Throws Error(dimension_mismatch) when orderings differ.
Analysis analyze(const ReachabilityMatrix& generated, const ReachabilityMatrix& deployed,
                 const std::string& firewall);

struct FirewallReport {
  Composition composition;
  Analysis analysis;
};

struct Report {
  std::vector<FirewallReport> firewalls;
  std::vector<Finding> findings;  // not_enforceable first, then per firewall
  Refinement refinement;
};

Report run_analysis(const std::vector<policy::AbstractPolicy>& policies,
                    const SystemDescription& sd);

enum class SuggestionKind { add_rule, remove_rule, install_filtering };

const char* to_string(SuggestionKind kind) noexcept;

struct Suggestion {
  SuggestionKind kind = SuggestionKind::add_rule;
  std::string node;                   // firewall or install location
  std::optional<FilteringRule> rule;  // add / remove
  std::optional<std::size_t> index;   // remove: position in the deployed list
  bool at_top = false;                // add: insert at position 0, else append
  std::string reason;

  bool operator==(const Suggestion&) const = default;
};

struct Remediation {
  std::vector<Suggestion> suggestions;
};

Remediation remediate(const Report& report, const std::vector<policy::AbstractPolicy>& policies,
                      const SystemDescription& sd);

/// Applies suggestions to a copy: installs, then removals (checked against
/// the recorded index and content), then additions in order. Throws
/// Error(stale_remediation).
SystemDescription react(const SystemDescription& sd, const Remediation& remediation);

nlohmann::ordered_json finding_to_json(const Finding& f);
nlohmann::ordered_json report_to_json(const Report& r);
nlohmann::ordered_json remediation_to_json(const Remediation& r);
Remediation remediation_from_json(const nlohmann::json& j);
std::string format_source(const SourceKey& s);
std::string format_destination(const DestKey& d);

}  // namespace siem::reach
