#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "autodml/core.hpp"
#include "autodml/error.hpp"
#include "autodml/random.hpp"

namespace autodml {

using Table = std::vector<std::vector<double>>;

// Tabular Markov process S_1 -> T_1 -> S_2 -> ... -> T_M -> Y over finite
// state grids. States are integers 0..arity-1 embedded as 1-dim reals.
class DiscreteDGP {
 public:
  struct Spec {
    int periods = 1;
    std::vector<int> state_arity;      // per period
    std::vector<int> treatment_arity;  // per period
    std::vector<double> initial;       // P(S_1 = s)
    std::vector<Table> propensity;     // [t][s][k] = P(T_t = k | S_t = s)
    std::vector<Table> transition;     // [t][s * K_t + k][s'] = P(S_{t+1} = s' | S_t = s, T_t = k), t < M
    Table outcome_mean;                // [s][k] = E[Y | S_M = s, T_M = k]
    double sigma_y = 0.0;
    std::uint64_t seed = 0;
  };

  explicit DiscreteDGP(Spec spec) : spec_(std::move(spec)) { validate(); }

  const Spec& spec() const { return spec_; }
  int periods() const { return spec_.periods; }
  int state_arity(int t) const { return spec_.state_arity[t - 1]; }
  int treatment_arity(int t) const { return spec_.treatment_arity[t - 1]; }
  double initial(int s) const { return spec_.initial[s]; }
  double propensity(int t, int s, int k) const { return spec_.propensity[t - 1][s][k]; }
  double transition(int t, int s, int k, int s_next) const {
    return spec_.transition[t - 1][static_cast<std::size_t>(s * treatment_arity(t) + k)][s_next];
  }
  double outcome_mean(int s, int k) const { return spec_.outcome_mean[s][k]; }
  double sigma_y() const { return spec_.sigma_y; }
  std::uint64_t seed() const { return spec_.seed; }

  // P(S_t = s) for every s.
  std::vector<double> state_marginal(int t) const {
    std::vector<double> p = spec_.initial;
    for (int u = 1; u < t; ++u) {
      std::vector<double> next(static_cast<std::size_t>(state_arity(u + 1)), 0.0);
      for (int s = 0; s < state_arity(u); ++s)
        for (int k = 0; k < treatment_arity(u); ++k)
          for (int s2 = 0; s2 < state_arity(u + 1); ++s2)
            next[s2] += p[s] * propensity(u, s, k) * transition(u, s, k, s2);
      p = std::move(next);
    }
    return p;
  }

  // min P(T_t = k | S_t = s) over cells whose state has positive mass.
  double positivity_bound() const {
    double bound = std::numeric_limits<double>::infinity();
    for (int t = 1; t <= periods(); ++t) {
      const auto mass = state_marginal(t);
      for (int s = 0; s < state_arity(t); ++s) {
        if (mass[s] <= 0.0) continue;
        for (int k = 0; k < treatment_arity(t); ++k) bound = std::min(bound, propensity(t, s, k));
      }
    }
    return bound;
  }

  // n i.i.d. trajectories. Per trajectory the stream is consumed as
  // S_1, T_1, ..., S_M, T_M, then one normal draw for the outcome noise.
  PanelDataset simulate(std::size_t n, std::uint64_t seed) const {
    if (n < 1) throw ValidationError("n must be >= 1");
    Rng rng(seed);
    std::vector<Trajectory> rows;
    rows.reserve(n);
    const int m = periods();
    for (std::size_t i = 0; i < n; ++i) {
      Trajectory z;
      z.states.reserve(static_cast<std::size_t>(m));
      z.treatments.reserve(static_cast<std::size_t>(m));
      int s = rng.categorical(spec_.initial);
      int k = 0;
      for (int t = 1; t <= m; ++t) {
        if (t > 1) s = rng.categorical(spec_.transition[t - 2][static_cast<std::size_t>(s * treatment_arity(t - 1) + k)]);
        k = rng.categorical(spec_.propensity[t - 1][s]);
        z.states.push_back({static_cast<double>(s)});
        z.treatments.push_back(k);
      }
      const double noise = rng.normal();
      z.outcome = outcome_mean(s, k) + spec_.sigma_y * noise;
      rows.push_back(std::move(z));
    }
    return PanelDataset(std::move(rows), std::vector<int>(static_cast<std::size_t>(m), 1), spec_.treatment_arity);
  }

 private:
  // Rows are reported 1-based.
  static void check_row(const std::vector<double>& row, std::size_t width, const std::string& table,
                        std::size_t index) {
    const std::string where = "table " + table + " row " + std::to_string(index + 1);
    if (row.size() != width)
      throw ValidationError(where + ": expected " + std::to_string(width) + " entries, got " +
                            std::to_string(row.size()));
    double sum = 0.0;
    for (double v : row) {
      if (!std::isfinite(v) || v < 0.0) throw ValidationError(where + ": probabilities must be finite and >= 0");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ValidationError(where + ": probabilities sum to " + std::to_string(sum));
  }

  void validate() const {
    const auto m = static_cast<std::size_t>(spec_.periods);
    if (spec_.periods < 1) throw ValidationError("periods must be >= 1");
    if (spec_.state_arity.size() != m) throw ValidationError("state_arity must list one entry per period");
    if (spec_.treatment_arity.size() != m) throw ValidationError("treatment_arity must list one entry per period");
    for (std::size_t t = 0; t < m; ++t) {
      if (spec_.state_arity[t] < 1) throw ValidationError("state_arity must be >= 1");
      if (spec_.treatment_arity[t] < 1) throw ValidationError("treatment_arity must be >= 1");
    }
    check_row(spec_.initial, static_cast<std::size_t>(spec_.state_arity[0]), "initial", 0);
    if (spec_.propensity.size() != m) throw ValidationError("one propensity table per period is required");
    for (std::size_t t = 0; t < m; ++t) {
      const std::string name = "propensity." + std::to_string(t + 1);
      if (spec_.propensity[t].size() != static_cast<std::size_t>(spec_.state_arity[t]))
        throw ValidationError("table " + name + ": expected " + std::to_string(spec_.state_arity[t]) + " rows");
      for (std::size_t r = 0; r < spec_.propensity[t].size(); ++r)
        check_row(spec_.propensity[t][r], static_cast<std::size_t>(spec_.treatment_arity[t]), name, r);
    }
    if (spec_.transition.size() != m - 1) throw ValidationError("one transition table per period t < M is required");
    for (std::size_t t = 0; t + 1 < m; ++t) {
      const std::string name = "transition." + std::to_string(t + 1);
      const auto rows = static_cast<std::size_t>(spec_.state_arity[t] * spec_.treatment_arity[t]);
      if (spec_.transition[t].size() != rows)
        throw ValidationError("table " + name + ": expected " + std::to_string(rows) + " rows");
      for (std::size_t r = 0; r < rows; ++r)
        check_row(spec_.transition[t][r], static_cast<std::size_t>(spec_.state_arity[t + 1]), name, r);
    }
    if (spec_.outcome_mean.size() != static_cast<std::size_t>(spec_.state_arity[m - 1]))
      throw ValidationError("table outcome: expected " + std::to_string(spec_.state_arity[m - 1]) + " rows");
    for (std::size_t r = 0; r < spec_.outcome_mean.size(); ++r) {
      if (spec_.outcome_mean[r].size() != static_cast<std::size_t>(spec_.treatment_arity[m - 1]))
        throw ValidationError("table outcome row " + std::to_string(r + 1) + ": expected " +
                              std::to_string(spec_.treatment_arity[m - 1]) + " entries");
      for (double v : spec_.outcome_mean[r])
        if (!std::isfinite(v)) throw ValidationError("table outcome row " + std::to_string(r + 1) + ": non-finite entry");
    }
    if (!std::isfinite(spec_.sigma_y) || spec_.sigma_y < 0.0) throw ValidationError("sigma_y must be >= 0");
  }

  Spec spec_;
};

// One period, binary state and treatment: P(S=1) = 0.5,
// P(T=1 | S) = (0.5, 0.25), Y = S + T exactly.
inline DiscreteDGP reference_dgp_1() {
  DiscreteDGP::Spec s;
  s.periods = 1;
  s.state_arity = {2};
  s.treatment_arity = {2};
  s.initial = {0.5, 0.5};
  s.propensity = {{{0.5, 0.5}, {0.75, 0.25}}};
  s.outcome_mean = {{0.0, 1.0}, {1.0, 2.0}};
  s.sigma_y = 0.0;
  return DiscreteDGP(std::move(s));
}

// Two periods, binary states and treatments, E[Y | S_2, T_2] = 2 + S_2 + T_2
// with unit Gaussian noise. theta(1,1) = 3.8.
inline DiscreteDGP reference_dgp_2() {
  DiscreteDGP::Spec s;
  s.periods = 2;
  s.state_arity = {2, 2};
  s.treatment_arity = {2, 2};
  s.initial = {0.5, 0.5};
  s.propensity = {{{0.5, 0.5}, {0.75, 0.25}}, {{0.5, 0.5}, {0.4, 0.6}}};
  s.transition = {{{0.7, 0.3}, {0.3, 0.7}, {0.5, 0.5}, {0.1, 0.9}}};
  s.outcome_mean = {{2.0, 3.0}, {3.0, 4.0}};
  s.sigma_y = 1.0;
  return DiscreteDGP(std::move(s));
}

}  // namespace autodml
