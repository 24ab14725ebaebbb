#include "policy.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <deque>

#include "error.hpp"

namespace siem::policy {

namespace {

[[noreturn]] void bad_sd(const std::string& why) {
  throw Error(ErrorKind::invalid_system_description, why);
}

[[noreturn]] void bad_config(const std::string& why) {
  throw Error(ErrorKind::invalid_config, why);
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

AttributeMap normalize_map(const AttributeMap& m) {
  AttributeMap out;
  for (const auto& [k, v] : m) {
    auto t = trim(v);
    if (!t.empty()) out.emplace(trim(k), std::move(t));
  }
  return out;
}

std::optional<std::uint16_t> parse_port(std::string_view s) {
  unsigned v{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || v > 65535) return std::nullopt;
  return static_cast<std::uint16_t>(v);
}

Protocol proto_from(const std::string& s, bool allow_any) {
  if (s == "TCP" || s == "tcp") return Protocol::TCP;
  if (s == "UDP" || s == "udp") return Protocol::UDP;
  if (allow_any && (s == "ANY" || s == "any" || s == "*")) return Protocol::ANY;
  bad_config("unknown protocol '" + s + "'");
}

Ipv4Prefix prefix_from(const nlohmann::json& j) {
  if (!j.is_string()) bad_config("IP field must be a string");
  auto s = j.get<std::string>();
  if (s == "*" || s == "any") return Ipv4Prefix::any();
  auto slash = s.find('/');
  auto addr = parse_ipv4(std::string_view(s).substr(0, slash));
  if (!addr) bad_config("bad IPv4 address '" + s + "'");
  unsigned len = 32;
  if (slash != std::string::npos) {
    auto lv = std::string_view(s).substr(slash + 1);
    auto r = std::from_chars(lv.data(), lv.data() + lv.size(), len);
    if (r.ec != std::errc{} || r.ptr != lv.data() + lv.size() || len > 32)
      bad_config("bad CIDR mask in '" + s + "'");
  }
  std::uint32_t mask = len == 0 ? 0 : ~std::uint32_t{0} << (32 - len);
  if ((*addr & mask) != *addr) bad_config("CIDR '" + s + "' has host bits set");
  return {*addr, static_cast<std::uint8_t>(len)};
}

void add_port_item(PortSet& ps, const nlohmann::json& item) {
  if (item.is_number_integer()) {
    auto v = item.get<std::int64_t>();
    if (v < 0 || v > 65535) bad_config("port out of range");
    ps.ranges.emplace_back(static_cast<std::uint16_t>(v), static_cast<std::uint16_t>(v));
    return;
  }
  if (!item.is_string()) bad_config("port must be a number or string");
  auto s = item.get<std::string>();
  auto dash = s.find('-');
  if (dash == std::string::npos) {
    auto p = parse_port(s);
    if (!p) bad_config("bad port '" + s + "'");
    ps.ranges.emplace_back(*p, *p);
    return;
  }
  auto lo = parse_port(std::string_view(s).substr(0, dash));
  auto hi = parse_port(std::string_view(s).substr(dash + 1));
  if (!lo || !hi || *lo > *hi) bad_config("bad port range '" + s + "'");
  ps.ranges.emplace_back(*lo, *hi);
}

PortSet ports_from(const nlohmann::json& j) {
  if (j.is_string() && (j == "*" || j == "any")) return PortSet::any();
  PortSet ps;
  if (j.is_array()) {
    if (j.empty()) bad_config("empty port list");
    for (const auto& item : j) add_port_item(ps, item);
  } else if (j.is_string() && j.get<std::string>().find(',') != std::string::npos) {
    auto s = j.get<std::string>();
    std::size_t start = 0;
    while (start <= s.size()) {
      auto comma = s.find(',', start);
      add_port_item(ps, trim(s.substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  } else {
    add_port_item(ps, j);
  }
  std::sort(ps.ranges.begin(), ps.ranges.end());
  return ps;
}

nlohmann::ordered_json prefix_json(const Ipv4Prefix& p) {
  if (p.length == 0) return "*";
  if (p.length == 32) return format_ipv4(p.addr);
  return format_ipv4(p.addr) + "/" + std::to_string(p.length);
}

nlohmann::ordered_json ports_json(const PortSet& ps) {
  if (ps.is_any()) return "*";
  auto item = [](const std::pair<std::uint16_t, std::uint16_t>& r) -> nlohmann::ordered_json {
    if (r.first == r.second) return r.first;
    return std::to_string(r.first) + "-" + std::to_string(r.second);
  };
  if (ps.ranges.size() == 1) return item(ps.ranges.front());
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : ps.ranges) arr.push_back(item(r));
  return arr;
}

AttributeMap attr_map_from(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  AttributeMap m;
  for (const auto& [k, v] : it->items()) m[k] = v.is_string() ? v.get<std::string>() : v.dump();
  return m;
}

std::string str_or(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() || it->is_null() ? std::string{} : it->get<std::string>();
}

}  // namespace

std::span<const std::string_view> attribute_names(Element e) noexcept {
  switch (e) {
    case Element::subject: return kSubjectAttributes;
    case Element::object: return kObjectAttributes;
    case Element::environment: return kEnvironmentAttributes;
  }
  return {};
}

const char* to_string(Element e) noexcept {
  switch (e) {
    case Element::subject: return "subject";
    case Element::object: return "object";
    case Element::environment: return "environment";
  }
  return "?";
}

const char* to_string(Effect e) noexcept { return e == Effect::permit ? "permit" : "deny"; }

const AttributeMap& AbstractPolicy::attributes(Element e) const {
  switch (e) {
    case Element::subject: return subject;
    case Element::object: return object;
    case Element::environment: return environment;
  }
  return subject;
}

void validate(const AbstractPolicy& p) {
  if (p.policy_id.empty()) bad_config("policy without an id");
  if (trim(p.action).empty()) bad_config("policy '" + p.policy_id + "': empty action");
  if (normalize_map(p.subject).empty())
    bad_config("policy '" + p.policy_id + "': needs at least one subject attribute");
  for (auto el : {Element::subject, Element::object, Element::environment}) {
    auto names = attribute_names(el);
    for (const auto& [k, _] : p.attributes(el))
      if (std::find(names.begin(), names.end(), k) == names.end())
        throw Error(ErrorKind::unknown_attribute, "policy '" + p.policy_id + "': unknown " +
                                                      to_string(el) + " attribute '" + k + "'");
  }
}

AbstractPolicy normalize(const AbstractPolicy& p) {
  AbstractPolicy n = p;
  n.policy_id = trim(p.policy_id);
  n.subject = normalize_map(p.subject);
  n.object = normalize_map(p.object);
  n.environment = normalize_map(p.environment);
  n.action = trim(p.action);
  std::transform(n.action.begin(), n.action.end(), n.action.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return n;
}

// ---------------------------------------------------------------------------

const char* to_string(Protocol p) noexcept {
  switch (p) {
    case Protocol::TCP: return "TCP";
    case Protocol::UDP: return "UDP";
    case Protocol::ANY: return "ANY";
  }
  return "?";
}

const char* to_string(RuleAction a) noexcept { return a == RuleAction::permit ? "permit" : "deny"; }

std::optional<std::uint32_t> parse_ipv4(std::string_view s) noexcept {
  std::uint32_t out = 0;
  for (int i = 0; i < 4; ++i) {
    unsigned octet{};
    auto r = std::from_chars(s.data(), s.data() + s.size(), octet);
    if (r.ec != std::errc{} || octet > 255 || r.ptr == s.data()) return std::nullopt;
    if (r.ptr - s.data() > 1 && s.front() == '0') return std::nullopt;
    out = (out << 8) | octet;
    s.remove_prefix(static_cast<std::size_t>(r.ptr - s.data()));
    if (i < 3) {
      if (s.empty() || s.front() != '.') return std::nullopt;
      s.remove_prefix(1);
    }
  }
  if (!s.empty()) return std::nullopt;
  return out;
}

std::string format_ipv4(std::uint32_t a) {
  return std::to_string(a >> 24) + "." + std::to_string((a >> 16) & 255) + "." +
         std::to_string((a >> 8) & 255) + "." + std::to_string(a & 255);
}

bool Ipv4Prefix::contains(std::uint32_t ip) const noexcept {
  if (length == 0) return true;
  std::uint32_t mask = ~std::uint32_t{0} << (32 - length);
  return (ip & mask) == addr;
}

PortSet PortSet::list(const std::vector<std::uint16_t>& ports) {
  PortSet ps;
  for (auto p : ports) ps.ranges.emplace_back(p, p);
  std::sort(ps.ranges.begin(), ps.ranges.end());
  ps.ranges.erase(std::unique(ps.ranges.begin(), ps.ranges.end()), ps.ranges.end());
  return ps;
}

bool PortSet::contains(std::uint16_t port) const noexcept {
  if (ranges.empty()) return true;
  return std::any_of(ranges.begin(), ranges.end(),
                     [&](const auto& r) { return r.first <= port && port <= r.second; });
}

bool rule_matches(const FilteringRule& r, const Packet& p) noexcept {
  return r.src_ip.contains(p.src_ip) && r.src_port.contains(p.src_port) &&
         r.dst_ip.contains(p.dst_ip) && r.dst_port.contains(p.dst_port) &&
         (r.proto == Protocol::ANY || r.proto == p.proto);
}

nlohmann::ordered_json rule_to_json(const FilteringRule& r) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["src_ip"] = prefix_json(r.src_ip);
  j["src_port"] = ports_json(r.src_port);
  j["dst_ip"] = prefix_json(r.dst_ip);
  j["dst_port"] = ports_json(r.dst_port);
  j["proto"] = to_string(r.proto);
  j["action"] = to_string(r.action);
  return j;
}

FilteringRule rule_from_json(const nlohmann::json& j) {
  try {
    FilteringRule r;
    r.src_ip = prefix_from(j.at("src_ip"));
    r.src_port = ports_from(j.value("src_port", nlohmann::json("*")));
    r.dst_ip = prefix_from(j.at("dst_ip"));
    r.dst_port = ports_from(j.value("dst_port", nlohmann::json("*")));
    r.proto = proto_from(j.value("proto", std::string("ANY")), true);
    auto action = j.value("action", std::string("permit"));
    if (action == "permit") r.action = RuleAction::permit;
    else if (action == "deny") r.action = RuleAction::deny;
    else bad_config("unknown rule action '" + action + "'");
    return r;
  } catch (const nlohmann::json::exception& e) {
    bad_config(std::string("filtering rule: ") + e.what());
  }
}

std::string describe(const FilteringRule& r) {
  auto j = rule_to_json(r);
  auto s = [](const nlohmann::ordered_json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
  return s(j["action"]) + " " + s(j["proto"]) + " " + s(j["src_ip"]) + ":" + s(j["src_port"]) +
         " -> " + s(j["dst_ip"]) + ":" + s(j["dst_port"]);
}

// ---------------------------------------------------------------------------

const Host* SystemDescription::find_host(std::string_view id) const {
  for (const auto& h : hosts)
    if (h.id == id) return &h;
  return nullptr;
}

bool SystemDescription::has_node(std::string_view id) const {
  if (find_host(id)) return true;
  return std::any_of(devices.begin(), devices.end(), [&](const Device& d) { return d.id == id; });
}

std::set<std::string> SystemDescription::capabilities(std::string_view node) const {
  if (const auto* h = find_host(node)) return h->capabilities;
  for (const auto& d : devices)
    if (d.id == node) return d.capabilities;
  return {};
}

std::vector<std::string> SystemDescription::firewall_nodes() const {
  std::vector<std::string> out;
  for (const auto& h : hosts)
    if (h.capabilities.count(std::string(kFiltering))) out.push_back(h.id);
  for (const auto& d : devices)
    if (d.capabilities.count(std::string(kFiltering))) out.push_back(d.id);
  std::sort(out.begin(), out.end());
  return out;
}

void validate(const SystemDescription& sd) {
  std::map<std::string, std::string> subnet_of;
  std::set<std::string> nodes;
  for (const auto& h : sd.hosts) {
    if (h.id.empty()) bad_sd("host without an id");
    if (!nodes.insert(h.id).second) bad_sd("duplicate node id '" + h.id + "'");
    if (h.ips.empty()) bad_sd("host '" + h.id + "' has no IP address");
    subnet_of[h.id] = h.subnet;
  }
  for (const auto& d : sd.devices) {
    if (d.id.empty()) bad_sd("device without an id");
    if (!nodes.insert(d.id).second) bad_sd("duplicate node id '" + d.id + "'");
    subnet_of[d.id] = d.subnet;
  }
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& [a, b] : sd.links) {
    if (!nodes.count(a) || !nodes.count(b))
      bad_sd("link " + a + " -- " + b + " references an undeclared node");
    if (a == b) bad_sd("self-loop on '" + a + "'");
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (const auto& s : sd.services) {
    if (!sd.find_host(s.host_id))
      bad_sd("service '" + s.name + "' references undeclared host '" + s.host_id + "'");
    if (s.ports.empty()) bad_sd("service '" + s.host_id + ":" + s.name + "' has no ports");
    if (s.proto == Protocol::ANY) bad_sd("service '" + s.host_id + ":" + s.name + "' needs TCP or UDP");
  }
  for (const auto& u : sd.users)
    if (!sd.find_host(u.host_id)) bad_sd("user '" + u.id + "' on undeclared host '" + u.host_id + "'");
  for (const auto& [fw, _] : sd.firewalls) {
    if (!nodes.count(fw)) bad_sd("rules for undeclared firewall '" + fw + "'");
    if (!sd.capabilities(fw).count(std::string(kFiltering)))
      bad_sd("node '" + fw + "' carries rules but lacks the filtering capability");
  }
  if (sd.client_ports.empty()) bad_sd("client port set is empty");

  // Nodes that share a subnet label must be connected.
  std::map<std::string, int> component;
  int next = 0;
  for (const auto& n : nodes) {
    if (component.count(n)) continue;
    std::deque<std::string> q{n};
    component[n] = next;
    while (!q.empty()) {
      auto cur = q.front();
      q.pop_front();
      for (const auto& nb : adj[cur])
        if (component.emplace(nb, next).second) q.push_back(nb);
    }
    ++next;
  }
  std::map<std::string, int> subnet_component;
  for (const auto& [node, subnet] : subnet_of) {
    if (subnet.empty()) continue;
    auto [it, fresh] = subnet_component.emplace(subnet, component[node]);
    if (!fresh && it->second != component[node])
      bad_sd("subnet '" + subnet + "' is not connected");
  }
}

SystemDescription system_from_json(const nlohmann::json& j) {
  SystemDescription sd;
  try {
    for (const auto& h : j.value("hosts", nlohmann::json::array())) {
      Host host;
      host.id = h.at("id").get<std::string>();
      for (const auto& ip : h.at("ips")) {
        auto a = parse_ipv4(ip.get<std::string>());
        if (!a) bad_sd("host '" + host.id + "': bad IPv4 '" + ip.get<std::string>() + "'");
        host.ips.push_back(*a);
      }
      host.role = str_or(h, "role");
      host.organization = str_or(h, "organization");
      host.owner = str_or(h, "owner");
      host.subnet = str_or(h, "subnet");
      host.capabilities = h.value("capabilities", std::set<std::string>{});
      host.capabilities.insert(std::string(kEndpoint));
      sd.hosts.push_back(std::move(host));
    }
    for (const auto& d : j.value("devices", nlohmann::json::array()))
      sd.devices.push_back({d.at("id").get<std::string>(),
                            d.value("capabilities", std::set<std::string>{}), str_or(d, "subnet")});
    for (const auto& s : j.value("services", nlohmann::json::array())) {
      Service svc;
      svc.host_id = s.at("host").get<std::string>();
      svc.name = s.at("name").get<std::string>();
      svc.proto = proto_from(s.value("proto", std::string("TCP")), false);
      for (const auto& p : s.at("ports")) {
        auto v = p.get<std::int64_t>();
        if (v < 0 || v > 65535) bad_sd("service port out of range");
        svc.ports.push_back(static_cast<std::uint16_t>(v));
      }
      sd.services.push_back(std::move(svc));
    }
    for (const auto& u : j.value("users", nlohmann::json::array()))
      sd.users.push_back({u.at("id").get<std::string>(), str_or(u, "role"),
                          str_or(u, "organization"), u.at("host").get<std::string>()});
    for (const auto& e : j.value("environments", nlohmann::json::array())) {
      AttributeMap m;
      for (const auto& [k, v] : e.items()) m[k] = v.get<std::string>();
      sd.environments.push_back(std::move(m));
    }
    for (const auto& l : j.value("links", nlohmann::json::array()))
      sd.links.emplace_back(l.at(0).get<std::string>(), l.at(1).get<std::string>());
    if (auto cp = j.find("client_ports"); cp != j.end())
      sd.client_ports = cp->get<std::vector<std::uint16_t>>();
    const auto fws = j.value("firewalls", nlohmann::json::object());
    for (const auto& [fw, rules] : fws.items()) {
      auto& list = sd.firewalls[fw];
      for (const auto& r : rules) list.push_back(rule_from_json(r));
    }
    sd.path_limit = j.value("path_limit", std::size_t{64});
  } catch (const nlohmann::json::exception& e) {
    bad_sd(std::string("system description: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::invalid_system_description) throw;
    bad_sd(e.what());
  }
  validate(sd);
  return sd;
}

nlohmann::ordered_json system_to_json(const SystemDescription& sd) {
  using oj = nlohmann::ordered_json;
  oj j = oj::object();
  oj hosts = oj::array();
  for (const auto& h : sd.hosts) {
    oj o = oj::object();
    o["id"] = h.id;
    oj ips = oj::array();
    for (auto ip : h.ips) ips.push_back(format_ipv4(ip));
    o["ips"] = ips;
    if (!h.role.empty()) o["role"] = h.role;
    if (!h.organization.empty()) o["organization"] = h.organization;
    if (!h.owner.empty()) o["owner"] = h.owner;
    if (!h.subnet.empty()) o["subnet"] = h.subnet;
    oj caps = oj::array();
    for (const auto& c : h.capabilities)
      if (c != kEndpoint) caps.push_back(c);
    if (!caps.empty()) o["capabilities"] = caps;
    hosts.push_back(o);
  }
  j["hosts"] = hosts;
  oj devices = oj::array();
  for (const auto& d : sd.devices) {
    oj o = oj::object();
    o["id"] = d.id;
    o["capabilities"] = d.capabilities;
    if (!d.subnet.empty()) o["subnet"] = d.subnet;
    devices.push_back(o);
  }
  j["devices"] = devices;
  oj services = oj::array();
  for (const auto& s : sd.services) {
    oj o = oj::object();
    o["host"] = s.host_id;
    o["name"] = s.name;
    o["proto"] = to_string(s.proto);
    o["ports"] = s.ports;
    services.push_back(o);
  }
  j["services"] = services;
  oj users = oj::array();
  for (const auto& u : sd.users) {
    oj o = oj::object();
    o["id"] = u.id;
    if (!u.role.empty()) o["role"] = u.role;
    if (!u.organization.empty()) o["organization"] = u.organization;
    o["host"] = u.host_id;
    users.push_back(o);
  }
  j["users"] = users;
  oj envs = oj::array();
  for (const auto& e : sd.environments) envs.push_back(oj(e));
  j["environments"] = envs;
  oj links = oj::array();
  for (const auto& [a, b] : sd.links) links.push_back(oj::array({a, b}));
  j["links"] = links;
  j["client_ports"] = sd.client_ports;
  oj fws = oj::object();
  for (const auto& [fw, rules] : sd.firewalls) {
    oj list = oj::array();
    for (const auto& r : rules) list.push_back(rule_to_json(r));
    fws[fw] = list;
  }
  j["firewalls"] = fws;
  j["path_limit"] = sd.path_limit;
  return j;
}

std::vector<AbstractPolicy> policies_from_json(const nlohmann::json& j) {
  std::vector<AbstractPolicy> out;
  try {
    const auto& list = j.is_object() ? j.at("policies") : j;
    std::set<std::string> ids;
    for (const auto& p : list) {
      AbstractPolicy pol;
      pol.policy_id = p.at("id").get<std::string>();
      pol.subject = attr_map_from(p, "subject");
      pol.action = p.value("action", std::string(kReach));
      pol.object = attr_map_from(p, "object");
      pol.environment = attr_map_from(p, "environment");
      auto effect = p.value("effect", std::string("permit"));
      if (effect == "permit") pol.effect = Effect::permit;
      else if (effect == "deny") pol.effect = Effect::deny;
      else bad_config("policy '" + pol.policy_id + "': unknown effect '" + effect + "'");
      validate(pol);
      if (!ids.insert(pol.policy_id).second) bad_config("duplicate policy id '" + pol.policy_id + "'");
      out.push_back(std::move(pol));
    }
  } catch (const nlohmann::json::exception& e) {
    bad_config(std::string("policy document: ") + e.what());
  }
  return out;
}

nlohmann::ordered_json policy_to_json(const AbstractPolicy& p) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["id"] = p.policy_id;
  j["subject"] = p.subject;
  j["action"] = p.action;
  j["object"] = p.object;
  j["environment"] = p.environment;
  j["effect"] = to_string(p.effect);
  return j;
}

// ---------------------------------------------------------------------------

Universe build_universe(const SystemDescription& sd, const std::vector<AbstractPolicy>& policies) {
  Universe u;
  auto put = [](AttributeMap& m, const char* k, const std::string& v) {
    if (!v.empty()) m[k] = v;
  };
  for (const auto& h : sd.hosts) {
    SubjectEntity s;
    put(s.attributes, "ID", h.id);
    put(s.attributes, "Role", h.role);
    put(s.attributes, "Organization", h.organization);
    s.host_id = h.id;
    u.subjects.push_back(std::move(s));
  }
  for (const auto& usr : sd.users) {
    SubjectEntity s;
    put(s.attributes, "ID", usr.id);
    put(s.attributes, "Role", usr.role);
    put(s.attributes, "Organization", usr.organization);
    s.host_id = usr.host_id;
    u.subjects.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < sd.services.size(); ++i) {
    const auto& svc = sd.services[i];
    ObjectEntity o;
    put(o.attributes, "ID", svc.host_id);
    put(o.attributes, "Type", svc.name);
    if (const auto* h = sd.find_host(svc.host_id)) put(o.attributes, "Owner", h->owner);
    o.service = i;
    u.objects.push_back(std::move(o));
  }
  if (!sd.environments.empty()) {
    u.environments = sd.environments;
    return u;
  }
  // Cartesian product of mentioned values, each attribute also "unset".
  std::map<std::string, std::set<std::string>> values;
  for (const auto& p : policies)
    for (const auto& [k, v] : normalize(p).environment) values[k].insert(v);
  u.environments.push_back({});
  for (const auto& [k, vs] : values) {
    std::vector<AttributeMap> next;
    for (const auto& env : u.environments) {
      next.push_back(env);
      for (const auto& v : vs) {
        auto e = env;
        e[k] = v;
        next.push_back(std::move(e));
      }
    }
    u.environments = std::move(next);
  }
  return u;
}

bool entity_matches(const AttributeMap& condition, const AttributeMap& entity) noexcept {
  for (const auto& [k, v] : condition) {
    auto it = entity.find(k);
    if (it == entity.end() || it->second != v) return false;
  }
  return true;
}

namespace {

bool any_common(const std::vector<bool>& a, const std::vector<bool>& b) {
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i)
    if (a[i] && b[i]) return true;
  return false;
}

bool none(const std::vector<bool>& a) {
  return std::none_of(a.begin(), a.end(), [](bool x) { return x; });
}

bool contained(const std::vector<bool>& a, const std::vector<bool>& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] && !(i < b.size() && b[i])) return false;
  return true;
}

}  // namespace

bool Scope::empty() const noexcept { return none(subjects) || none(objects) || none(environments); }

bool Scope::overlaps(const Scope& o) const noexcept {
  return any_common(subjects, o.subjects) && any_common(objects, o.objects) &&
         any_common(environments, o.environments);
}

bool Scope::subset_of(const Scope& o) const noexcept {
  if (empty()) return true;
  return contained(subjects, o.subjects) && contained(objects, o.objects) &&
         contained(environments, o.environments);
}

Scope scope_of(const AbstractPolicy& policy, const Universe& u) {
  auto p = normalize(policy);
  Scope s;
  for (const auto& e : u.subjects) s.subjects.push_back(entity_matches(p.subject, e.attributes));
  for (const auto& e : u.objects) s.objects.push_back(entity_matches(p.object, e.attributes));
  for (const auto& e : u.environments) s.environments.push_back(entity_matches(p.environment, e));
  return s;
}

const char* to_string(AnomalyKind k) noexcept {
  return k == AnomalyKind::equivalence ? "equivalence" : "redundancy";
}

namespace {

bool same_rule_body(const AbstractPolicy& a, const AbstractPolicy& b) {
  return a.subject == b.subject && a.action == b.action && a.object == b.object &&
         a.environment == b.environment && a.effect == b.effect;
}

// Every (element, attribute, value) condition of `inner` also appears in `outer`
// and outer has at least one more.
bool strictly_more_conditions(const AbstractPolicy& outer, const AbstractPolicy& inner) {
  std::size_t extra = 0;
  for (auto el : {Element::subject, Element::object, Element::environment}) {
    const auto& o = outer.attributes(el);
    const auto& i = inner.attributes(el);
    for (const auto& [k, v] : i) {
      auto it = o.find(k);
      if (it == o.end() || it->second != v) return false;
    }
    extra += o.size() - i.size();
  }
  return extra > 0;
}

}  // namespace

std::vector<PolicyAnomaly> detect_policy_anomalies(const std::vector<AbstractPolicy>& policies,
                                                   const Universe& universe) {
  std::vector<AbstractPolicy> norm;
  std::vector<Scope> scopes;
  for (const auto& p : policies) {
    norm.push_back(normalize(p));
    scopes.push_back(scope_of(p, universe));
  }
  std::vector<PolicyAnomaly> out;
  for (std::size_t i = 0; i < norm.size(); ++i)
    for (std::size_t j = i + 1; j < norm.size(); ++j) {
      const auto& a = norm[i];
      const auto& b = norm[j];
      if (same_rule_body(a, b)) {
        out.push_back({AnomalyKind::equivalence, std::min(a.policy_id, b.policy_id),
                       std::max(a.policy_id, b.policy_id)});
        continue;
      }
      if (a.action != b.action || a.effect != b.effect) continue;
      auto subsumed_by = [&](std::size_t in, std::size_t out_idx) {
        if (!scopes[in].subset_of(scopes[out_idx])) return false;
        if (!(scopes[in] == scopes[out_idx])) return true;
        return strictly_more_conditions(norm[in], norm[out_idx]);
      };
      if (subsumed_by(j, i)) out.push_back({AnomalyKind::redundancy, b.policy_id, a.policy_id});
      else if (subsumed_by(i, j)) out.push_back({AnomalyKind::redundancy, a.policy_id, b.policy_id});
    }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<PolicyConflict> detect_conflicts(const std::vector<AbstractPolicy>& policies,
                                             const Universe& universe) {
  std::vector<AbstractPolicy> norm;
  std::vector<Scope> scopes;
  for (const auto& p : policies) {
    norm.push_back(normalize(p));
    scopes.push_back(scope_of(p, universe));
  }
  std::vector<PolicyConflict> out;
  for (std::size_t i = 0; i < norm.size(); ++i)
    for (std::size_t j = i + 1; j < norm.size(); ++j) {
      const auto& a = norm[i];
      const auto& b = norm[j];
      if (a.action != b.action || a.effect == b.effect) continue;
      if (!scopes[i].overlaps(scopes[j])) continue;
      out.push_back({std::min(a.policy_id, b.policy_id), std::max(a.policy_id, b.policy_id)});
    }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace siem::policy
