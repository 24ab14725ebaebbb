#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "policy.hpp"

namespace siem::ahp {

/// Square, positive, row-major.
class ComparisonMatrix {
 public:
  ComparisonMatrix() = default;
  explicit ComparisonMatrix(std::vector<std::vector<double>> rows);

  std::size_t size() const noexcept { return n_; }
  double at(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }
  std::vector<std::vector<double>> rows() const;

  /// Throws Error(invalid_matrix) unless square (n >= 2), positive, unit
  /// diagonal and reciprocal within `tolerance`.
  void validate(double tolerance = 1e-12) const;

  bool operator==(const ComparisonMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> a_;
};

using PriorityVector = std::vector<double>;

inline constexpr double kStrongPreference = 9.0;

/// 2x2 presence matrix for one attribute of one element.
/// Throws Error(unknown_attribute) when `attribute` is not a name of `element`.
ComparisonMatrix comparison_matrix_for_attribute(const policy::AbstractPolicy& p1,
                                                 const policy::AbstractPolicy& p2,
                                                 policy::Element element,
                                                 const std::string& attribute);

/// Same, on presence of any attribute of the element (criteria without
/// sub-criteria).
ComparisonMatrix comparison_matrix_for_element(const policy::AbstractPolicy& p1,
                                               const policy::AbstractPolicy& p2,
                                               policy::Element element);

struct PowerIteration {
  double tolerance = 1e-10;
  std::size_t max_iterations = 10'000;
};

/// Normalised principal eigenvector by power iteration.
/// Throws Error(invalid_matrix) or Error(non_convergence).
PriorityVector principal_priorities(const ComparisonMatrix& m, PowerIteration opts = {});

struct SubCriterion {
  std::string attribute;
  double weight = 0.0;
};

struct Criterion {
  policy::Element element = policy::Element::subject;
  double weight = 0.0;
  std::vector<SubCriterion> subcriteria;  // may be empty
};

struct AhpHierarchy {
  std::string goal = "select the policy";
  std::vector<Criterion> criteria;
};

/// Equal criterion weights; within each element ID is strongly (5) preferred
/// to the two other attributes, which are equal among themselves, except for
/// the environment where all three are equal.
AhpHierarchy default_hierarchy();

/// Throws Error(invalid_config) on bad weights, Error(unknown_attribute) on
/// sub-criteria outside the element's attribute set.
void validate(const AhpHierarchy& h);

/// Document form:
///   {"criteria": [{"name": "subject", "weight": 0.33,
///                  "subcriteria": [{"attribute": "ID", "weight": 0.7}, ...]}]}
/// Instead of explicit weights a level may carry "judgments": a pairwise
/// comparison matrix in list order, from which weights are derived.
AhpHierarchy hierarchy_from_json(const nlohmann::json& j);
nlohmann::ordered_json hierarchy_to_json(const AhpHierarchy& h);

/// Leaf key: "<element>" for a criterion without sub-criteria, otherwise
/// "<element>/<attribute>".
std::string leaf_key(const Criterion& c, const SubCriterion* sub);

using LocalPriorities = std::map<std::string, PriorityVector>;

/// Weighted sum over the hierarchy's leaves. Throws
/// Error(missing_local_priority) when a leaf has no local vector.
PriorityVector global_priority(const AhpHierarchy& h, const LocalPriorities& locals);

struct LeafTrace {
  std::string leaf;
  double weight = 0.0;  // product of criterion and sub-criterion weights
  ComparisonMatrix matrix;
  PriorityVector local;
};

struct Resolution {
  std::array<std::string, 2> alternatives;
  PriorityVector global;
  std::string chosen_policy_id;
  bool tied = false;
  std::vector<LeafTrace> trace;
};

inline constexpr double kTieTolerance = 1e-12;

Resolution resolve(const policy::AbstractPolicy& p1, const policy::AbstractPolicy& p2,
                   const AhpHierarchy& h);

nlohmann::ordered_json resolution_to_json(const Resolution& r);

}  // namespace siem::ahp
