#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "autodml/core.hpp"
#include "autodml/dgp.hpp"
#include "autodml/error.hpp"
#include "autodml/features.hpp"
#include "autodml/functional.hpp"
#include "autodml/linear_fn.hpp"
#include "autodml/moment.hpp"

namespace autodml {

// Tabular f_t or a_t on the grid of a DiscreteDGP: values[t-1](s, k).
// zero_mass[t-1](s, k) marks cells with P(S_t = s, T_t = k) = 0.
struct OracleTables {
  std::vector<Eigen::MatrixXd> values;
  std::vector<Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>> zero_mass;

  int periods() const { return static_cast<int>(values.size()); }
  double operator()(int t, int s, int k) const { return values[t - 1](s, k); }
};

// The one-hot basis over (S_t, T_t) cells of the DGP's grid.
inline FeatureMapPtr grid_feature_map(const DiscreteDGP& dgp, int t) {
  return share(FeatureMap::tabular({dgp.state_arity(t)}, dgp.treatment_arity(t)));
}

// Tabular weights for a table over the grid basis (index = k * S + s).
inline LinearFn table_to_fn(const DiscreteDGP& dgp, int t, const Eigen::MatrixXd& table) {
  const int S = dgp.state_arity(t);
  const int K = dgp.treatment_arity(t);
  Eigen::VectorXd w(S * K);
  for (int k = 0; k < K; ++k)
    for (int s = 0; s < S; ++s) w(k * S + s) = table(s, k);
  return LinearFn(grid_feature_map(dgp, t), std::move(w));
}

inline std::vector<LinearFn> tables_to_fns(const DiscreteDGP& dgp, const OracleTables& tables) {
  std::vector<LinearFn> out;
  for (int t = 1; t <= tables.periods(); ++t) out.push_back(table_to_fn(dgp, t, tables.values[t - 1]));
  return out;
}

// Evaluates any LinearFn over the DGP grid into a table.
inline Eigen::MatrixXd fn_to_table(const DiscreteDGP& dgp, int t, const LinearFn& g) {
  Eigen::MatrixXd out(dgp.state_arity(t), dgp.treatment_arity(t));
  for (int s = 0; s < dgp.state_arity(t); ++s) {
    const double state = s;
    for (int k = 0; k < dgp.treatment_arity(t); ++k) out(s, k) = g(std::span<const double>(&state, 1), k);
  }
  return out;
}

// A full path of the DGP with its probability; z.outcome holds
// E[Y | S_M, T_M], which is all any population expectation here needs.
struct WeightedPath {
  Trajectory z;
  std::vector<int> states;
  double prob = 0.0;
};

namespace detail {

inline void extend_paths(const DiscreteDGP& dgp, int t, int last_period, bool include_zero, bool stop_at_state,
                         WeightedPath& current, std::vector<WeightedPath>& out) {
  // current holds periods 1..t-1 complete; extend with S_t (and T_t unless
  // stopping at the state of last_period).
  for (int s = 0; s < dgp.state_arity(t); ++s) {
    double ps = 0.0;
    if (t == 1) {
      ps = dgp.initial(s);
    } else {
      ps = dgp.transition(t - 1, current.states.back(), current.z.treatments.back(), s);
    }
    const double prob_s = current.prob * ps;
    if (!include_zero && prob_s <= 0.0) continue;
    current.states.push_back(s);
    current.z.states.push_back({static_cast<double>(s)});
    const double saved = current.prob;
    current.prob = prob_s;
    if (stop_at_state && t == last_period) {
      out.push_back(current);
    } else {
      for (int k = 0; k < dgp.treatment_arity(t); ++k) {
        const double prob_k = prob_s * dgp.propensity(t, s, k);
        if (!include_zero && prob_k <= 0.0) continue;
        current.z.treatments.push_back(k);
        const double saved_k = current.prob;
        current.prob = prob_k;
        if (t == last_period) {
          current.z.outcome = dgp.outcome_mean(s, k);
          out.push_back(current);
        } else {
          extend_paths(dgp, t + 1, last_period, include_zero, stop_at_state, current, out);
        }
        current.prob = saved_k;
        current.z.treatments.pop_back();
      }
    }
    current.prob = saved;
    current.states.pop_back();
    current.z.states.pop_back();
  }
}

}  // namespace detail

// Every positive-probability path (S_1, T_1, ..., S_M, T_M).
inline std::vector<WeightedPath> enumerate_paths(const DiscreteDGP& dgp) {
  std::vector<WeightedPath> out;
  WeightedPath start;
  start.prob = 1.0;
  detail::extend_paths(dgp, 1, dgp.periods(), false, false, start, out);
  return out;
}

// Every prefix (S_1, T_1, ..., S_t), zero-probability ones included.
inline std::vector<WeightedPath> enumerate_prefixes(const DiscreteDGP& dgp, int t) {
  std::vector<WeightedPath> out;
  WeightedPath start;
  start.prob = 1.0;
  detail::extend_paths(dgp, 1, t, true, true, start, out);
  return out;
}

template <typename Fn>
double population_expectation(const DiscreteDGP& dgp, Fn&& fn) {
  double acc = 0.0;
  for (const auto& path : enumerate_paths(dgp)) acc += path.prob * fn(path);
  return acc;
}

namespace detail {

inline void check_periods(const DiscreteDGP& dgp, const TreatmentFunctional& functional) {
  if (functional.periods() != dgp.periods())
    throw ValidationError("functional has " + std::to_string(functional.periods()) + " periods but the DGP has " +
                          std::to_string(dgp.periods()));
}

inline Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> zero_mass_cells(const DiscreteDGP& dgp, int t) {
  const auto mass = dgp.state_marginal(t);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> z(dgp.state_arity(t), dgp.treatment_arity(t));
  for (int s = 0; s < dgp.state_arity(t); ++s)
    for (int k = 0; k < dgp.treatment_arity(t); ++k) z(s, k) = mass[s] * dgp.propensity(t, s, k) <= 0.0;
  return z;
}

}  // namespace detail

// Backward recursion f_M = mu, f_t(s, k) = E[m_{t+1}(Z; f_{t+1}) | S_t = s, T_t = k].
// Rules of m_{t+1} may look at the past; the past is averaged under its law
// given S_t = s (uniformly when S_t = s has no mass).
inline OracleTables oracle_nested_regressions(const DiscreteDGP& dgp, const TreatmentFunctional& functional) {
  detail::check_periods(dgp, functional);
  const int m = dgp.periods();
  OracleTables out;
  out.values.resize(static_cast<std::size_t>(m));
  out.zero_mass.resize(static_cast<std::size_t>(m));
  for (int t = 1; t <= m; ++t) out.zero_mass[t - 1] = detail::zero_mass_cells(dgp, t);

  Eigen::MatrixXd last(dgp.state_arity(m), dgp.treatment_arity(m));
  for (int s = 0; s < dgp.state_arity(m); ++s)
    for (int k = 0; k < dgp.treatment_arity(m); ++k) last(s, k) = dgp.outcome_mean(s, k);
  out.values[m - 1] = last;

  for (int t = m - 1; t >= 1; --t) {
    const Eigen::MatrixXd& next = out.values[t];
    const int S = dgp.state_arity(t);
    const int K = dgp.treatment_arity(t);
    const int K_next = dgp.treatment_arity(t + 1);
    auto next_fn = [&](std::span<const double> state, int d) {
      return next(static_cast<Eigen::Index>(state[0]), d);
    };
    const auto prefixes = enumerate_prefixes(dgp, t);
    std::vector<double> mass(static_cast<std::size_t>(S), 0.0);
    std::vector<int> count(static_cast<std::size_t>(S), 0);
    for (const auto& p : prefixes) {
      mass[p.states.back()] += p.prob;
      ++count[p.states.back()];
    }
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(S, K);
    for (const auto& p : prefixes) {
      const int s = p.states.back();
      const double w = mass[s] > 0.0 ? p.prob / mass[s] : 1.0 / count[s];
      if (w == 0.0) continue;
      Trajectory ext = p.z;
      ext.states.push_back({0.0});
      for (int k = 0; k < K; ++k) {
        ext.treatments.push_back(k);
        double acc = 0.0;
        for (int s2 = 0; s2 < dgp.state_arity(t + 1); ++s2) {
          const double ps = dgp.transition(t, s, k, s2);
          if (ps == 0.0) continue;
          ext.states.back()[0] = s2;
          acc += ps * apply_moment(functional, t + 1, prefix_of(ext, t + 1), K_next, next_fn);
        }
        f(s, k) += w * acc;
        ext.treatments.pop_back();
      }
    }
    out.values[t - 1] = f;
  }
  return out;
}

// theta = E[m_1(Z; f_1)].
inline double oracle_theta(const DiscreteDGP& dgp, const TreatmentFunctional& functional) {
  const OracleTables f = oracle_nested_regressions(dgp, functional);
  const Eigen::MatrixXd& f1 = f.values[0];
  double theta = 0.0;
  for (int s = 0; s < dgp.state_arity(1); ++s) {
    if (dgp.initial(s) == 0.0) continue;
    Trajectory z;
    z.states.push_back({static_cast<double>(s)});
    theta += dgp.initial(s) * apply_moment(functional, 1, prefix_of(z, 1), dgp.treatment_arity(1),
                                           [&](std::span<const double> st, int d) {
                                             return f1(static_cast<Eigen::Index>(st[0]), d);
                                           });
  }
  return theta;
}

// Minimal Riesz representers by the indicator-basis system
// E[a_t 1{(S_t,T_t) = (s,k)}] = E[a_{t-1} m_t(Z; 1{(s,k)})], which is
// diagonal with the cell mass on the diagonal. Zero-mass cells with no
// functional mass get 0; with functional mass, positivity fails.
inline OracleTables oracle_riesz(const DiscreteDGP& dgp, const TreatmentFunctional& functional) {
  detail::check_periods(dgp, functional);
  const int m = dgp.periods();
  OracleTables out;
  out.values.resize(static_cast<std::size_t>(m));
  out.zero_mass.resize(static_cast<std::size_t>(m));
  for (int t = 1; t <= m; ++t) {
    const int S = dgp.state_arity(t);
    const int K = dgp.treatment_arity(t);
    out.zero_mass[t - 1] = detail::zero_mass_cells(dgp, t);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(S, K);
    for (const auto& p : enumerate_prefixes(dgp, t)) {
      if (p.prob == 0.0) continue;
      const double prev = t == 1 ? 1.0 : out.values[t - 2](p.states[t - 2], p.z.treatments[t - 2]);
      if (prev == 0.0) continue;
      const int s = p.states.back();
      for_each_term(functional, t, prefix_of(p.z, t), K,
                    [&](double w, std::span<const double>, int d) { rhs(s, d) += p.prob * prev * w; });
    }
    const auto mass = dgp.state_marginal(t);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(S, K);
    for (int s = 0; s < S; ++s)
      for (int k = 0; k < K; ++k) {
        const double cell = mass[s] * dgp.propensity(t, s, k);
        if (cell > 0.0) {
          a(s, k) = rhs(s, k) / cell;
        } else if (rhs(s, k) != 0.0) {
          throw ValidationError("positivity violated at period " + std::to_string(t) + ", state " +
                                std::to_string(s) + ": treatment " + std::to_string(k) +
                                " is targeted but has zero propensity");
        }
      }
    out.values[t - 1] = a;
  }
  return out;
}

// Closed form for a static sequence tau via Markov marginals:
// a_t(s, k) = 1{k = tau_t} E[a_{t-1} | S_t = s] / P(T_t = tau_t | S_t = s).
inline OracleTables oracle_riesz_fixed_sequence(const DiscreteDGP& dgp, const std::vector<int>& tau) {
  const int m = dgp.periods();
  if (static_cast<int>(tau.size()) != m) throw ValidationError("sequence length differs from the DGP's periods");
  OracleTables out;
  out.values.resize(static_cast<std::size_t>(m));
  out.zero_mass.resize(static_cast<std::size_t>(m));
  for (int t = 1; t <= m; ++t) {
    const int S = dgp.state_arity(t);
    const int K = dgp.treatment_arity(t);
    if (tau[t - 1] < 0 || tau[t - 1] >= K)
      throw ValidationError("sequence code outside the treatment arity at period " + std::to_string(t));
    out.zero_mass[t - 1] = detail::zero_mass_cells(dgp, t);
    const auto mass = dgp.state_marginal(t);
    std::vector<double> cond_prev(static_cast<std::size_t>(S), 1.0);
    if (t > 1) {
      const auto prev_mass = dgp.state_marginal(t - 1);
      std::fill(cond_prev.begin(), cond_prev.end(), 0.0);
      for (int s0 = 0; s0 < dgp.state_arity(t - 1); ++s0)
        for (int k0 = 0; k0 < dgp.treatment_arity(t - 1); ++k0)
          for (int s = 0; s < S; ++s)
            cond_prev[s] += prev_mass[s0] * dgp.propensity(t - 1, s0, k0) * out.values[t - 2](s0, k0) *
                            dgp.transition(t - 1, s0, k0, s);
      for (int s = 0; s < S; ++s) cond_prev[s] = mass[s] > 0.0 ? cond_prev[s] / mass[s] : 0.0;
    }
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(S, K);
    for (int s = 0; s < S; ++s) {
      if (mass[s] <= 0.0) continue;
      const double pi = dgp.propensity(t, s, tau[t - 1]);
      if (pi <= 0.0) {
        if (cond_prev[s] == 0.0) continue;
        throw ValidationError("positivity violated at period " + std::to_string(t) + ", state " + std::to_string(s));
      }
      a(s, tau[t - 1]) = cond_prev[s] / pi;
    }
    out.values[t - 1] = a;
  }
  return out;
}

inline NuisanceSet oracle_nuisances(const DiscreteDGP& dgp, const TreatmentFunctional& functional) {
  return NuisanceSet(tables_to_fns(dgp, oracle_nested_regressions(dgp, functional)),
                     tables_to_fns(dgp, oracle_riesz(dgp, functional)));
}

// E[m_M(Z; f, a)] under the DGP's law with Y replaced by E[Y | S_M, T_M].
inline double population_moment(const DiscreteDGP& dgp, const TreatmentFunctional& functional,
                                 const NuisanceSet& nuisances) {
  detail::check_periods(dgp, functional);
  return population_expectation(
      dgp, [&](const WeightedPath& p) { return orthogonal_moment(p.z, functional, nuisances).value; });
}

// L_t(a) = E[a(S_t,T_t)^2 - 2 prev(S_{t-1},T_{t-1}) m_t(Z; a)].
inline double population_riesz_loss(const DiscreteDGP& dgp, const TreatmentFunctional& functional, int t,
                                    const LinearFn& candidate, const LinearFn& prev) {
  return population_expectation(dgp, [&](const WeightedPath& p) {
    const double a = candidate(p.z.state(t), p.z.treatment(t));
    const double pv = t == 1 ? prev(std::span<const double>(), 0) : prev(p.z.state(t - 1), p.z.treatment(t - 1));
    return a * a - 2.0 * pv * evaluate_moment(functional, t, p.z, candidate);
  });
}

// ||g - h||_2 over the law of (S_t, T_t).
inline double population_l2_distance(const DiscreteDGP& dgp, int t, const LinearFn& g, const LinearFn& h) {
  return std::sqrt(population_expectation(dgp, [&](const WeightedPath& p) {
    const double d = g(p.z.state(t), p.z.treatment(t)) - h(p.z.state(t), p.z.treatment(t));
    return d * d;
  }));
}

// max over t and indicator cells g of |E[a_t g] - E[a_{t-1} m_t(Z; g)]|,
// summed over full paths.
inline double riesz_identity_residual(const DiscreteDGP& dgp, const TreatmentFunctional& functional,
                                      const std::vector<LinearFn>& representers) {
  double worst = 0.0;
  for (int t = 1; t <= dgp.periods(); ++t) {
    const auto map = grid_feature_map(dgp, t);
    for (std::size_t cell = 0; cell < map->size(); ++cell) {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(map->size()));
      w(static_cast<Eigen::Index>(cell)) = 1.0;
      const LinearFn g(map, w);
      const LinearFn& a = representers[t - 1];
      const double lhs = population_expectation(
          dgp, [&](const WeightedPath& p) { return a(p.z.state(t), p.z.treatment(t)) * g(p.z.state(t), p.z.treatment(t)); });
      const double rhs = population_expectation(dgp, [&](const WeightedPath& p) {
        const double prev = t == 1 ? 1.0 : representers[t - 2](p.z.state(t - 1), p.z.treatment(t - 1));
        return prev * evaluate_moment(functional, t, p.z, g);
      });
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return worst;
}

}  // namespace autodml
