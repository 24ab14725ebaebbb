#include "ahp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "error.hpp"

namespace siem::ahp {

using policy::AbstractPolicy;
using policy::Element;

ComparisonMatrix::ComparisonMatrix(std::vector<std::vector<double>> rows) : n_(rows.size()) {
  for (const auto& r : rows) {
    if (r.size() != n_) throw Error(ErrorKind::invalid_matrix, "comparison matrix is not square");
    a_.insert(a_.end(), r.begin(), r.end());
  }
}

std::vector<std::vector<double>> ComparisonMatrix::rows() const {
  std::vector<std::vector<double>> out(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i].assign(a_.begin() + i * n_, a_.begin() + (i + 1) * n_);
  return out;
}

void ComparisonMatrix::validate(double tolerance) const {
  if (n_ < 2) throw Error(ErrorKind::invalid_matrix, "comparison matrix needs n >= 2");
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) {
      double v = at(i, j);
      if (!std::isfinite(v) || v <= 0)
        throw Error(ErrorKind::invalid_matrix, "comparison matrix entries must be positive");
      if (std::abs(v * at(j, i) - 1.0) > tolerance)
        throw Error(ErrorKind::invalid_matrix, "comparison matrix is not reciprocal at (" +
                                                   std::to_string(i) + "," + std::to_string(j) + ")");
    }
}

namespace {

ComparisonMatrix presence_matrix(bool in1, bool in2) {
  if (in1 == in2) return ComparisonMatrix({{1, 1}, {1, 1}});
  if (in1) return ComparisonMatrix({{1, kStrongPreference}, {1 / kStrongPreference, 1}});
  return ComparisonMatrix({{1, 1 / kStrongPreference}, {kStrongPreference, 1}});
}

void check_attribute(Element element, const std::string& attribute) {
  auto names = policy::attribute_names(element);
  if (std::find(names.begin(), names.end(), attribute) == names.end())
    throw Error(ErrorKind::unknown_attribute, std::string("'") + attribute + "' is not a " +
                                                  policy::to_string(element) + " attribute");
}

std::vector<double> weights_from(const nlohmann::json& level, const nlohmann::json& items,
                                 const std::string& what) {
  std::vector<double> w;
  if (auto jd = level.find("judgments"); jd != level.end()) {
    auto m = ComparisonMatrix(jd->get<std::vector<std::vector<double>>>());
    if (m.size() != items.size())
      throw Error(ErrorKind::invalid_config, what + ": judgment matrix size does not match");
    m.validate(1e-9);
    return principal_priorities(m);
  }
  for (const auto& it : items) {
    if (!it.contains("weight")) {
      w.assign(items.size(), 1.0 / static_cast<double>(items.size()));
      return w;
    }
    w.push_back(it.at("weight").get<double>());
  }
  return w;
}

Element element_from(const std::string& name) {
  if (name == "subject") return Element::subject;
  if (name == "object") return Element::object;
  if (name == "environment") return Element::environment;
  throw Error(ErrorKind::invalid_config, "unknown criterion '" + name + "'");
}

}  // namespace

ComparisonMatrix comparison_matrix_for_attribute(const AbstractPolicy& p1, const AbstractPolicy& p2,
                                                 Element element, const std::string& attribute) {
  check_attribute(element, attribute);
  auto a = policy::normalize(p1);
  auto b = policy::normalize(p2);
  return presence_matrix(a.attributes(element).count(attribute) > 0,
                         b.attributes(element).count(attribute) > 0);
}

ComparisonMatrix comparison_matrix_for_element(const AbstractPolicy& p1, const AbstractPolicy& p2,
                                               Element element) {
  auto a = policy::normalize(p1);
  auto b = policy::normalize(p2);
  return presence_matrix(!a.attributes(element).empty(), !b.attributes(element).empty());
}

PriorityVector principal_priorities(const ComparisonMatrix& m, PowerIteration opts) {
  m.validate(1e-9);
  const std::size_t n = m.size();
  PriorityVector x(n, 1.0 / static_cast<double>(n));
  PriorityVector y(n);
  for (std::size_t it = 0; it < opts.max_iterations; ++it) {
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = 0;
      for (std::size_t j = 0; j < n; ++j) y[i] += m.at(i, j) * x[j];
      sum += y[i];
    }
    double delta = 0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] /= sum;
      delta = std::max(delta, std::abs(y[i] - x[i]));
    }
    x.swap(y);
    if (delta < opts.tolerance) return x;
  }
  throw Error(ErrorKind::non_convergence, "power iteration did not converge within " +
                                              std::to_string(opts.max_iterations) + " iterations");
}

AhpHierarchy default_hierarchy() {
  // ID strongly preferred (5) to the two others, which tie.
  const ComparisonMatrix id_first({{1, 5, 5}, {1.0 / 5, 1, 1}, {1.0 / 5, 1, 1}});
  const auto w = principal_priorities(id_first);
  const auto third = principal_priorities(ComparisonMatrix({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}}));

  AhpHierarchy h;
  h.criteria.push_back({Element::subject, third[0],
                        {{"ID", w[0]}, {"Role", w[1]}, {"Organization", w[2]}}});
  h.criteria.push_back({Element::object, third[1],
                        {{"ID", w[0]}, {"Type", w[1]}, {"Owner", w[2]}}});
  h.criteria.push_back({Element::environment, third[2],
                        {{"Time", 1.0 / 3}, {"Location", 1.0 / 3}, {"Network", 1.0 / 3}}});
  return h;
}

void validate(const AhpHierarchy& h) {
  if (h.criteria.empty()) throw Error(ErrorKind::invalid_config, "hierarchy has no criteria");
  double total = 0;
  std::vector<Element> seen;
  for (const auto& c : h.criteria) {
    if (std::find(seen.begin(), seen.end(), c.element) != seen.end())
      throw Error(ErrorKind::invalid_config,
                  std::string("duplicate criterion '") + policy::to_string(c.element) + "'");
    seen.push_back(c.element);
    if (!(c.weight > 0))
      throw Error(ErrorKind::invalid_config, "criterion weights must be positive");
    total += c.weight;
    if (c.subcriteria.empty()) continue;
    double sub = 0;
    std::vector<std::string> names;
    for (const auto& s : c.subcriteria) {
      check_attribute(c.element, s.attribute);
      if (std::find(names.begin(), names.end(), s.attribute) != names.end())
        throw Error(ErrorKind::invalid_config, "duplicate sub-criterion '" + s.attribute + "'");
      names.push_back(s.attribute);
      if (!(s.weight > 0))
        throw Error(ErrorKind::invalid_config, "sub-criterion weights must be positive");
      sub += s.weight;
    }
    if (std::abs(sub - 1.0) > 1e-9)
      throw Error(ErrorKind::invalid_config, std::string("sub-criterion weights of '") +
                                                 policy::to_string(c.element) + "' do not sum to 1");
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw Error(ErrorKind::invalid_config, "criterion weights do not sum to 1");
}

AhpHierarchy hierarchy_from_json(const nlohmann::json& j) {
  try {
    AhpHierarchy h;
    h.goal = j.value("goal", h.goal);
    const auto& crit = j.at("criteria");
    auto cw = weights_from(j, crit, "criteria");
    for (std::size_t i = 0; i < crit.size(); ++i) {
      Criterion c;
      c.element = element_from(crit[i].at("name").get<std::string>());
      c.weight = cw[i];
      if (auto subs = crit[i].find("subcriteria"); subs != crit[i].end() && !subs->empty()) {
        auto sw = weights_from(crit[i], *subs, policy::to_string(c.element));
        for (std::size_t k = 0; k < subs->size(); ++k)
          c.subcriteria.push_back({(*subs)[k].at("attribute").get<std::string>(), sw[k]});
      }
      h.criteria.push_back(std::move(c));
    }
    validate(h);
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid_config, std::string("hierarchy document: ") + e.what());
  }
}

nlohmann::ordered_json hierarchy_to_json(const AhpHierarchy& h) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["goal"] = h.goal;
  auto crit = nlohmann::ordered_json::array();
  for (const auto& c : h.criteria) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    o["name"] = policy::to_string(c.element);
    o["weight"] = c.weight;
    auto subs = nlohmann::ordered_json::array();
    for (const auto& s : c.subcriteria) subs.push_back({{"attribute", s.attribute}, {"weight", s.weight}});
    o["subcriteria"] = subs;
    crit.push_back(o);
  }
  j["criteria"] = crit;
  return j;
}

std::string leaf_key(const Criterion& c, const SubCriterion* sub) {
  std::string k = policy::to_string(c.element);
  if (sub) k += "/" + sub->attribute;
  return k;
}

PriorityVector global_priority(const AhpHierarchy& h, const LocalPriorities& locals) {
  std::size_t n = 0;
  PriorityVector g;
  auto add = [&](const std::string& key, double weight) {
    auto it = locals.find(key);
    if (it == locals.end())
      throw Error(ErrorKind::missing_local_priority, "no local priority for leaf '" + key + "'");
    if (n == 0) {
      n = it->second.size();
      g.assign(n, 0.0);
    }
    if (it->second.size() != n || n == 0)
      throw Error(ErrorKind::missing_local_priority, "leaf '" + key + "' has the wrong arity");
    for (std::size_t i = 0; i < n; ++i) g[i] += weight * it->second[i];
  };
  for (const auto& c : h.criteria) {
    if (c.subcriteria.empty()) {
      add(leaf_key(c, nullptr), c.weight);
      continue;
    }
    for (const auto& s : c.subcriteria) add(leaf_key(c, &s), c.weight * s.weight);
  }
  return g;
}

Resolution resolve(const AbstractPolicy& p1, const AbstractPolicy& p2, const AhpHierarchy& h) {
  validate(h);
  Resolution r;
  r.alternatives = {p1.policy_id, p2.policy_id};
  LocalPriorities locals;
  auto leaf = [&](std::string key, double weight, ComparisonMatrix m) {
    auto local = principal_priorities(m);
    locals[key] = local;
    r.trace.push_back({std::move(key), weight, std::move(m), std::move(local)});
  };
  for (const auto& c : h.criteria) {
    if (c.subcriteria.empty()) {
      leaf(leaf_key(c, nullptr), c.weight, comparison_matrix_for_element(p1, p2, c.element));
      continue;
    }
    for (const auto& s : c.subcriteria)
      leaf(leaf_key(c, &s), c.weight * s.weight,
           comparison_matrix_for_attribute(p1, p2, c.element, s.attribute));
  }
  r.global = global_priority(h, locals);
  if (std::abs(r.global[0] - r.global[1]) <= kTieTolerance) {
    r.tied = true;
    r.chosen_policy_id = std::min(p1.policy_id, p2.policy_id);
  } else {
    r.chosen_policy_id = r.global[0] > r.global[1] ? p1.policy_id : p2.policy_id;
  }
  return r;
}

nlohmann::ordered_json resolution_to_json(const Resolution& r) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["alternatives"] = r.alternatives;
  j["global_priorities"] = r.global;
  j["chosen"] = r.chosen_policy_id;
  j["tied"] = r.tied;
  auto trace = nlohmann::ordered_json::array();
  for (const auto& t : r.trace) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    o["leaf"] = t.leaf;
    o["weight"] = t.weight;
    o["matrix"] = t.matrix.rows();
    o["local"] = t.local;
    trace.push_back(o);
  }
  j["trace"] = trace;
  return j;
}

}  // namespace siem::ahp
