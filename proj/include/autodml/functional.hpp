#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "autodml/core.hpp"
#include "autodml/error.hpp"
#include "autodml/linear_fn.hpp"

namespace autodml {

// One evaluation w(prefix) * g(S_t, d(prefix)) of a nested moment m_t.
// Weights never depend on g, which keeps m_t linear in g.
struct EvaluationTerm {
  std::function<double(const Prefix&)> weight;
  std::function<int(const Prefix&)> target;
};

enum class FunctionalKind { kFixedSequence, kDynamicPolicy, kRandomizedPolicy, kSequenceContrast, kCustom };

// The nested linear moments m_1..m_M: m_t(Z; g) = sum_k w_k(Z) g(S_t, d_k(Z)),
// where w_k and d_k see only the prefix (S_1..S_t, T_1..T_{t-1}).
class TreatmentFunctional {
 public:
  using PolicyRule = std::function<int(const Prefix&)>;
  using ProbabilityRule = std::function<std::vector<double>(const Prefix&)>;

  struct Arm {
    double coefficient = 1.0;
    std::vector<int> sequence;
  };

  explicit TreatmentFunctional(std::vector<std::vector<EvaluationTerm>> periods, std::string description = "custom",
                               FunctionalKind kind = FunctionalKind::kCustom)
      : periods_(std::move(periods)), description_(std::move(description)), kind_(kind) {
    if (periods_.empty()) throw ValidationError("treatment functional must cover at least one period");
    for (std::size_t t = 0; t < periods_.size(); ++t) {
      if (periods_[t].empty())
        throw ValidationError("treatment functional has no evaluation terms at period " + std::to_string(t + 1));
      for (const auto& term : periods_[t])
        if (!term.weight || !term.target)
          throw ValidationError("treatment functional term at period " + std::to_string(t + 1) + " is incomplete");
    }
  }

  // theta(tau) = E[Y^(tau)]: one unit-weight term per period.
  static TreatmentFunctional fixed_sequence(std::vector<int> tau) {
    if (tau.empty()) throw ValidationError("fixed sequence must have at least one period");
    std::vector<std::vector<EvaluationTerm>> periods;
    std::ostringstream os;
    os << "fixed(";
    for (std::size_t t = 0; t < tau.size(); ++t) {
      if (tau[t] < 0) throw ValidationError("fixed sequence: negative treatment code at period " + std::to_string(t + 1));
      const int code = tau[t];
      periods.push_back({EvaluationTerm{[](const Prefix&) { return 1.0; }, [code](const Prefix&) { return code; }}});
      os << (t ? "," : "") << code;
    }
    os << ")";
    TreatmentFunctional f(std::move(periods), os.str(), FunctionalKind::kFixedSequence);
    f.fixed_ = std::move(tau);
    return f;
  }

  // Deterministic policy pi_t(prefix), one unit-weight term per period.
  static TreatmentFunctional dynamic_policy(std::vector<PolicyRule> rules, std::string description = "policy") {
    std::vector<std::vector<EvaluationTerm>> periods;
    for (auto& rule : rules) {
      if (!rule) throw ValidationError("dynamic policy: empty rule");
      periods.push_back({EvaluationTerm{[](const Prefix&) { return 1.0; }, std::move(rule)}});
    }
    return TreatmentFunctional(std::move(periods), std::move(description), FunctionalKind::kDynamicPolicy);
  }

  // Randomized policy: term k carries probability p_k(prefix) and targets k.
  static TreatmentFunctional randomized_policy(std::vector<ProbabilityRule> rules, std::vector<int> arities,
                                               std::string description = "randomized-policy") {
    if (rules.size() != arities.size()) throw ValidationError("randomized policy: one arity per period required");
    std::vector<std::vector<EvaluationTerm>> periods;
    for (std::size_t t = 0; t < rules.size(); ++t) {
      auto rule = std::make_shared<ProbabilityRule>(std::move(rules[t]));
      std::vector<EvaluationTerm> terms;
      for (int k = 0; k < arities[t]; ++k) {
        const int arity = arities[t];
        terms.push_back(EvaluationTerm{[rule, k, arity, t](const Prefix& p) {
                                         const std::vector<double> probs = (*rule)(p);
                                         if (static_cast<int>(probs.size()) != arity)
                                           throw ValidationError("randomized policy at period " +
                                                                 std::to_string(t + 1) +
                                                                 " returned the wrong number of probabilities");
                                         return probs[static_cast<std::size_t>(k)];
                                       },
                                       [k](const Prefix&) { return k; }});
      }
      periods.push_back(std::move(terms));
    }
    return TreatmentFunctional(std::move(periods), std::move(description), FunctionalKind::kRandomizedPolicy);
  }

  // sum_j c_j theta(tau^j). Regressions only see (S_t, T_t), so the weight
  // of g(S_t, v) may depend on T_{t-1} alone: each arm is a path of edges
  // (tau_{t-1}, tau_t) and carries its coefficient on an edge no other arm
  // uses. Arm sets that admit extra paths through shared edges, or where an
  // arm has no edge of its own, need earlier treatments in the state and
  // are rejected.
  static TreatmentFunctional sequence_contrast(std::vector<Arm> arms) {
    if (arms.empty()) throw ValidationError("sequence contrast needs at least one arm");
    const std::size_t m = arms.front().sequence.size();
    if (m == 0) throw ValidationError("sequence contrast arms must have at least one period");
    std::map<std::vector<int>, double> merged;
    for (const auto& arm : arms) {
      if (arm.sequence.size() != m) throw ValidationError("sequence contrast arms differ in length");
      for (int code : arm.sequence)
        if (code < 0) throw ValidationError("sequence contrast: negative treatment code");
      merged[arm.sequence] += arm.coefficient;
    }

    std::ostringstream os;
    os << "contrast(";
    bool first = true;
    for (const auto& [seq, c] : merged) {
      os << (first ? "" : " ") << (c >= 0 ? "+" : "") << c << "*[";
      for (std::size_t t = 0; t < seq.size(); ++t) os << (t ? "," : "") << seq[t];
      os << "]";
      first = false;
    }
    os << ")";

    std::vector<std::pair<std::vector<int>, double>> live;
    for (const auto& [seq, c] : merged)
      if (c != 0.0) live.emplace_back(seq, c);

    // edge (previous code, code) at each period; -1 stands for "no previous"
    using Edge = std::pair<int, int>;
    auto edge = [](const std::vector<int>& seq, std::size_t t) { return Edge{t ? seq[t - 1] : -1, seq[t]}; };
    std::vector<std::map<Edge, std::vector<std::size_t>>> users(m);
    for (std::size_t j = 0; j < live.size(); ++j)
      for (std::size_t t = 0; t < m; ++t) users[t][edge(live[j].first, t)].push_back(j);

    // paths through the edge graph must be exactly the arms
    std::map<int, double> paths{{-1, 1.0}};
    for (std::size_t t = 0; t < m; ++t) {
      std::map<int, double> next;
      for (const auto& [e, who] : users[t])
        if (paths.count(e.first)) next[e.second] += paths[e.first];
      paths = std::move(next);
    }
    double total = 0.0;
    for (const auto& [v, count] : paths) total += count;
    auto unsupported = [&](const std::string& why) {
      return ValidationError("sequence contrast " + os.str() + ": " + why +
                             "; the weights would need treatments before the previous period");
    };
    if (total > static_cast<double>(live.size())) throw unsupported("shared transitions admit sequences outside the arms");

    std::vector<std::map<Edge, double>> weights(m);
    for (std::size_t t = 0; t < m; ++t)
      for (const auto& [e, who] : users[t]) weights[t][e] = 1.0;
    for (std::size_t j = 0; j < live.size(); ++j) {
      bool placed = false;
      for (std::size_t t = m; t-- > 0 && !placed;) {
        const Edge e = edge(live[j].first, t);
        if (users[t][e].size() == 1) {
          weights[t][e] = live[j].second;
          placed = true;
        }
      }
      if (!placed) throw unsupported("an arm shares every transition with other arms");
    }

    std::vector<std::vector<EvaluationTerm>> periods(m);
    if (live.empty()) {
      // every coefficient cancelled: the zero functional
      for (std::size_t t = 0; t < m; ++t) {
        const int v = merged.begin()->first[t];
        periods[t].push_back(EvaluationTerm{[](const Prefix&) { return 0.0; }, [v](const Prefix&) { return v; }});
      }
      return TreatmentFunctional(std::move(periods), os.str(), FunctionalKind::kSequenceContrast);
    }
    for (std::size_t t = 0; t < m; ++t) {
      std::vector<int> values;
      for (const auto& [e, w] : weights[t])
        if (std::find(values.begin(), values.end(), e.second) == values.end()) values.push_back(e.second);
      std::sort(values.begin(), values.end());
      auto table = std::make_shared<const std::map<Edge, double>>(weights[t]);
      for (int v : values)
        periods[t].push_back(EvaluationTerm{[table, t, v](const Prefix& p) {
                                              const int prev = t ? p.treatments[t - 1] : -1;
                                              const auto it = table->find(Edge{prev, v});
                                              return it == table->end() ? 0.0 : it->second;
                                            },
                                            [v](const Prefix&) { return v; }});
    }
    return TreatmentFunctional(std::move(periods), os.str(), FunctionalKind::kSequenceContrast);
  }

  int periods() const { return static_cast<int>(periods_.size()); }
  const std::vector<EvaluationTerm>& terms(int period) const { return periods_.at(period - 1); }
  FunctionalKind kind() const { return kind_; }
  const std::string& description() const { return description_; }
  // The static sequence when this functional was built by fixed_sequence().
  const std::optional<std::vector<int>>& fixed_targets() const { return fixed_; }

 private:
  std::vector<std::vector<EvaluationTerm>> periods_;
  std::string description_;
  FunctionalKind kind_;
  std::optional<std::vector<int>> fixed_;
};

// Visits every nonzero term of m_t at `prefix` as visit(weight, state, code).
// Targets are validated against `arity`.
template <typename Visit>
void for_each_term(const TreatmentFunctional& functional, int period, const Prefix& prefix, int arity,
                   Visit&& visit) {
  if (period < 1 || period > functional.periods())
    throw ValidationError("moment evaluated at invalid period " + std::to_string(period) + " (functional has " +
                          std::to_string(functional.periods()) + ")");
  const auto& terms = functional.terms(period);
  for (std::size_t j = 0; j < terms.size(); ++j) {
    const double w = terms[j].weight(prefix);
    if (w == 0.0) continue;
    const int d = terms[j].target(prefix);
    if (d < 0 || d >= arity)
      throw ValidationError("period " + std::to_string(period) + ", term " + std::to_string(j + 1) +
                            ": target code " + std::to_string(d) + " outside [0, " + std::to_string(arity) + ")");
    visit(w, prefix.current_state(), d);
  }
}

// m_t(prefix; g) for any callable g(state, code).
template <typename Fn>
double apply_moment(const TreatmentFunctional& functional, int period, const Prefix& prefix, int arity, Fn&& g) {
  double acc = 0.0;
  for_each_term(functional, period, prefix, arity,
                [&](double w, std::span<const double> s, int d) { acc += w * g(s, d); });
  return acc;
}

inline double evaluate_moment(const TreatmentFunctional& functional, int period, const Trajectory& z,
                              const LinearFn& g) {
  if (period < 1 || period > functional.periods() || period > z.periods())
    throw ValidationError("moment evaluated at invalid period " + std::to_string(period));
  return apply_moment(functional, period, prefix_of(z, period), g.feature_map().treatment_arity(),
                      [&](std::span<const double> s, int d) { return g(s, d); });
}

// sum_k w_k(prefix) phi(S_t, d_k(prefix)): the feature image of m_t.
inline Eigen::VectorXd moment_features(const TreatmentFunctional& functional, int period, const Prefix& prefix,
                                       const FeatureMap& map) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(map.size()));
  Eigen::VectorXd phi(static_cast<Eigen::Index>(map.size()));
  for_each_term(functional, period, prefix, map.treatment_arity(), [&](double w, std::span<const double> s, int d) {
    map.evaluate(s, d, std::span<double>(phi.data(), map.size()));
    out += w * phi;
  });
  return out;
}

}  // namespace autodml
