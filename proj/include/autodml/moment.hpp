#pragma once

#include <vector>

#include "autodml/core.hpp"
#include "autodml/functional.hpp"
#include "autodml/linear_fn.hpp"

namespace autodml {

// m_M(Z; f, a) split into the plug-in m_1(Z; f_1) and the M corrections
// a_t(S_t, T_t) (u_{t+1} - f_t(S_t, T_t)), u_{M+1} = Y.
// value is summed as plug_in, then corrections t = 1..M in order.
struct MomentValue {
  double value = 0.0;
  double plug_in = 0.0;
  std::vector<double> corrections;
};

// u_{t+1} = m_{t+1}(Z; f_{t+1}) for t < M, Y for t = M.
inline double pseudo_outcome(const Trajectory& z, const TreatmentFunctional& functional, const NuisanceSet& nuisances,
                             int t) {
  if (t == functional.periods()) return z.outcome;
  return evaluate_moment(functional, t + 1, z, nuisances.regression(t + 1));
}

inline MomentValue orthogonal_moment(const Trajectory& z, const TreatmentFunctional& functional,
                                     const NuisanceSet& nuisances) {
  const int m = functional.periods();
  if (nuisances.periods() != m || z.periods() != m)
    throw ValidationError("orthogonal moment: functional, nuisances and trajectory disagree on the number of periods");
  MomentValue out;
  out.corrections.resize(static_cast<std::size_t>(m));
  out.plug_in = evaluate_moment(functional, 1, z, nuisances.regression(1));
  out.value = out.plug_in;
  for (int t = 1; t <= m; ++t) {
    const double residual = pseudo_outcome(z, functional, nuisances, t) - nuisances.regression(t)(z.state(t), z.treatment(t));
    const double c = nuisances.representer(t)(z.state(t), z.treatment(t)) * residual;
    out.corrections[static_cast<std::size_t>(t - 1)] = c;
    out.value += c;
  }
  return out;
}

}  // namespace autodml
