#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "autodml/error.hpp"

namespace autodml {

// One observed unit: (S_1, T_1, ..., S_M, T_M, Y). Periods are 1-based in
// every public API; storage is 0-based.
struct Trajectory {
  std::vector<std::vector<double>> states;
  std::vector<int> treatments;
  double outcome = 0.0;

  int periods() const { return static_cast<int>(states.size()); }
  std::span<const double> state(int period) const { return states[period - 1]; }
  int treatment(int period) const { return treatments[period - 1]; }

  bool operator==(const Trajectory&) const = default;
};

// The observable history (S_1..S_t, T_1..T_{t-1}) available to the rules of
// a treatment functional at period t.
struct Prefix {
  std::span<const std::vector<double>> states;
  std::span<const int> treatments;

  int period() const { return static_cast<int>(states.size()); }
  std::span<const double> current_state() const { return states.back(); }
  // Treatment of an earlier period u < period().
  int treatment(int u) const { return treatments[u - 1]; }
  std::span<const double> state(int u) const { return states[u - 1]; }
};

inline Prefix prefix_of(const Trajectory& z, int period) {
  return Prefix{std::span<const std::vector<double>>(z.states).first(period),
                std::span<const int>(z.treatments).first(period - 1)};
}

class PanelDataset {
 public:
  PanelDataset() = default;

  PanelDataset(std::vector<Trajectory> trajectories, std::vector<int> period_dims,
               std::vector<int> treatment_arities)
      : trajectories_(std::move(trajectories)),
        period_dims_(std::move(period_dims)),
        treatment_arities_(std::move(treatment_arities)) {
    validate();
  }

  std::size_t size() const { return trajectories_.size(); }
  int periods() const { return static_cast<int>(period_dims_.size()); }
  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  const Trajectory& operator[](std::size_t i) const { return trajectories_[i]; }
  const std::vector<int>& period_dims() const { return period_dims_; }
  const std::vector<int>& treatment_arities() const { return treatment_arities_; }
  int state_dim(int period) const { return period_dims_[period - 1]; }
  int treatment_arity(int period) const { return treatment_arities_[period - 1]; }

  PanelDataset subset(std::span<const std::size_t> rows) const {
    std::vector<Trajectory> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(trajectories_.at(r));
    return PanelDataset(std::move(out), period_dims_, treatment_arities_);
  }

  bool operator==(const PanelDataset&) const = default;

 private:
  void validate() const {
    if (trajectories_.empty()) throw ValidationError("panel dataset must contain at least one trajectory");
    if (period_dims_.empty()) throw ValidationError("panel dataset must have at least one period");
    if (period_dims_.size() != treatment_arities_.size())
      throw ValidationError("period_dims and treatment_arities differ in length");
    for (std::size_t t = 0; t < period_dims_.size(); ++t) {
      if (period_dims_[t] < 1) throw ValidationError("state dimension must be >= 1 at period " + std::to_string(t + 1));
      if (treatment_arities_[t] < 1)
        throw ValidationError("treatment arity must be >= 1 at period " + std::to_string(t + 1));
    }
    const std::size_t m = period_dims_.size();
    for (std::size_t i = 0; i < trajectories_.size(); ++i) {
      const Trajectory& z = trajectories_[i];
      const std::string where = "trajectory " + std::to_string(i);
      if (z.states.size() != m || z.treatments.size() != m)
        throw ValidationError(where + ": expected " + std::to_string(m) + " periods");
      for (std::size_t t = 0; t < m; ++t) {
        if (static_cast<int>(z.states[t].size()) != period_dims_[t])
          throw ValidationError(where + ": state at period " + std::to_string(t + 1) + " has wrong dimension");
        if (z.treatments[t] < 0 || z.treatments[t] >= treatment_arities_[t])
          throw ValidationError(where + ": treatment code " + std::to_string(z.treatments[t]) +
                                " outside arity at period " + std::to_string(t + 1));
      }
      if (!std::isfinite(z.outcome)) throw ValidationError(where + ": outcome is not finite");
    }
  }

  std::vector<Trajectory> trajectories_;
  std::vector<int> period_dims_;
  std::vector<int> treatment_arities_;
};

}  // namespace autodml
