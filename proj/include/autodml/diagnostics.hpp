#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "autodml/dgp.hpp"
#include "autodml/error.hpp"
#include "autodml/functional.hpp"
#include "autodml/linear_fn.hpp"
#include "autodml/moment.hpp"
#include "autodml/oracle.hpp"
#include "autodml/random.hpp"

namespace autodml {

// Directions h_t for the regressions and g_t for the representers; a
// missing entry leaves that nuisance untouched. `scale` multiplies both.
struct Perturbation {
  std::vector<std::optional<LinearFn>> regression;
  std::vector<std::optional<LinearFn>> representer;
  double scale = 1.0;

  static Perturbation none(int periods) {
    Perturbation p;
    p.regression.resize(static_cast<std::size_t>(periods));
    p.representer.resize(static_cast<std::size_t>(periods));
    return p;
  }
};

inline NuisanceSet apply(const NuisanceSet& base, const Perturbation& p, double eps) {
  if (!(eps > 0.0) || !(p.scale > 0.0)) throw ValidationError("perturbation scale must be > 0");
  NuisanceSet out = base;
  for (int t = 1; t <= base.periods(); ++t) {
    const auto i = static_cast<std::size_t>(t - 1);
    if (i < p.regression.size() && p.regression[i])
      out = out.with_regression(t, base.regression(t).perturbed(*p.regression[i], eps * p.scale));
    if (i < p.representer.size() && p.representer[i])
      out = out.with_representer(t, base.representer(t).perturbed(*p.representer[i], eps * p.scale));
  }
  return out;
}

inline NuisanceSet apply(const NuisanceSet& base, const Perturbation& p) { return apply(base, p, 1.0); }

struct MixedBias {
  double direct = 0.0;
  double formula = 0.0;
};

// direct = E[m(alt)] - E[m(truth)]; formula = sum_t E[a~_t (m_{t+1}(Z; f~_{t+1}) - f~_t)]
// with f~_{M+1} = 0, both by enumeration.
inline MixedBias mixed_bias(const DiscreteDGP& dgp, const TreatmentFunctional& functional, const NuisanceSet& alt,
                            const NuisanceSet& truth) {
  const int m = functional.periods();
  if (alt.periods() != m || truth.periods() != m) throw ValidationError("nuisance sets must cover every period");
  MixedBias out;
  out.direct = population_moment(dgp, functional, alt) - population_moment(dgp, functional, truth);
  out.formula = population_expectation(dgp, [&](const WeightedPath& p) {
    double acc = 0.0;
    for (int t = 1; t <= m; ++t) {
      const auto s = p.z.state(t);
      const int k = p.z.treatment(t);
      const double a_tilde = alt.representer(t)(s, k) - truth.representer(t)(s, k);
      if (a_tilde == 0.0) continue;
      double next = 0.0;
      if (t < m)
        next = evaluate_moment(functional, t + 1, p.z, alt.regression(t + 1)) -
               evaluate_moment(functional, t + 1, p.z, truth.regression(t + 1));
      const double f_tilde = alt.regression(t)(s, k) - truth.regression(t)(s, k);
      acc += a_tilde * (next - f_tilde);
    }
    return acc;
  });
  return out;
}

struct SlopeResult {
  double slope = 0.0;
  std::vector<double> eps;
  std::vector<double> biases;
  // Every bias sits at rounding level, so no slope exists; the moment is
  // flat along the direction and slope is reported as +infinity.
  bool identically_zero = false;
};

// Least-squares slope of log|bias| on log eps.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("log-log slope needs at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw ValidationError("log-log slope needs distinct abscissae");
  return sxy / sxx;
}

inline void check_eps_grid(const std::vector<double>& grid) {
  if (grid.size() < 3) throw ValidationError("eps grid needs at least 3 points");
  for (double e : grid)
    if (!(e > 0.0) || !std::isfinite(e)) throw ValidationError("eps grid must be strictly positive");
  const auto [lo, hi] = std::minmax_element(grid.begin(), grid.end());
  if (*hi / *lo < 100.0 * (1.0 - 1e-9)) throw ValidationError("eps grid must span at least two decades");
}

// |E[m(truth + eps * direction)] - theta| over the grid and its log-log slope.
inline SlopeResult orthogonality_slope(const DiscreteDGP& dgp, const TreatmentFunctional& functional,
                                       const NuisanceSet& truth, const Perturbation& direction,
                                       const std::vector<double>& eps_grid) {
  check_eps_grid(eps_grid);
  const double theta = population_moment(dgp, functional, truth);
  const double floor = 1e-14 * (1.0 + std::abs(theta));
  SlopeResult out;
  std::vector<double> xs, ys;
  for (double e : eps_grid) {
    const double b = std::abs(population_moment(dgp, functional, apply(truth, direction, e)) - theta);
    out.eps.push_back(e);
    out.biases.push_back(b);
    if (b > floor) {
      xs.push_back(e);
      ys.push_back(b);
    }
  }
  if (xs.size() < 2) {
    out.identically_zero = true;
    out.slope = std::numeric_limits<double>::infinity();
  } else {
    out.slope = loglog_slope(xs, ys);
  }
  return out;
}

inline SlopeResult orthogonality_slope(const DiscreteDGP& dgp, const TreatmentFunctional& functional,
                                       const Perturbation& direction, const std::vector<double>& eps_grid) {
  return orthogonality_slope(dgp, functional, oracle_nuisances(dgp, functional), direction, eps_grid);
}

// A LinearFn on the DGP grid with entries uniform in [-bound, bound].
inline LinearFn random_grid_fn(const DiscreteDGP& dgp, int t, Rng& rng, double bound = 1.0) {
  const auto map = grid_feature_map(dgp, t);
  Eigen::VectorXd w(static_cast<Eigen::Index>(map->size()));
  for (Eigen::Index j = 0; j < w.size(); ++j) w(j) = rng.uniform(-bound, bound);
  return LinearFn(map, w);
}

struct DiagnosticCheck {
  std::string name;
  double value = 0.0;      // residual or slope
  double threshold = 0.0;  // pass when value <= threshold (residuals) or >= threshold (slopes)
  bool passed = false;
  std::string detail;
};

struct DiagnosticOptions {
  std::vector<double> eps_grid{1e-1, 1e-2, 1e-3};
  double slope_threshold = 1.9;
  double tolerance = 1e-10;
  int mixed_bias_draws = 100;
  std::uint64_t seed = 0;
};

// The population checks behind the diagnose command: Riesz identity,
// orthogonality slopes per period, cross-period flatness, mixed bias and
// double robustness.
inline std::vector<DiagnosticCheck> run_diagnostics(const DiscreteDGP& dgp, const TreatmentFunctional& functional,
                                                    const DiagnosticOptions& opt = {}) {
  std::vector<DiagnosticCheck> checks;
  const int m = dgp.periods();
  const NuisanceSet truth = oracle_nuisances(dgp, functional);
  const double theta = oracle_theta(dgp, functional);
  Rng rng(opt.seed);
  auto residual = [&](std::string name, double v, double tol, std::string detail = {}) {
    checks.push_back({std::move(name), v, tol, v <= tol, std::move(detail)});
  };

  residual("riesz_identity", riesz_identity_residual(dgp, functional, truth.representers()), opt.tolerance);
  residual("population_moment_equals_theta", std::abs(population_moment(dgp, functional, truth) - theta),
           opt.tolerance);

  for (int t = 1; t <= m; ++t) {
    for (int which = 0; which < 3; ++which) {
      Perturbation p = Perturbation::none(m);
      const LinearFn h = random_grid_fn(dgp, t, rng);
      const LinearFn g = random_grid_fn(dgp, t, rng);
      if (which != 1) p.regression[static_cast<std::size_t>(t - 1)] = h;
      if (which != 0) p.representer[static_cast<std::size_t>(t - 1)] = g;
      const char* label = which == 0 ? "f" : which == 1 ? "a" : "joint";
      const SlopeResult r = orthogonality_slope(dgp, functional, truth, p, opt.eps_grid);
      DiagnosticCheck c;
      c.name = std::string("orthogonality_slope_") + label + "_t" + std::to_string(t);
      c.value = r.slope;
      c.threshold = opt.slope_threshold;
      c.passed = r.slope >= opt.slope_threshold;
      c.detail = r.identically_zero ? "bias identically zero along direction" : "";
      checks.push_back(c);
      if (which == 2) {
        // Same-period joint bias is exactly -eps^2 E[g h].
        const double e = opt.eps_grid.front();
        const double egh = population_expectation(dgp, [&](const WeightedPath& w) {
          return g(w.z.state(t), w.z.treatment(t)) * h(w.z.state(t), w.z.treatment(t));
        });
        const double bias = population_moment(dgp, functional, apply(truth, p, e)) - theta;
        residual("joint_second_order_t" + std::to_string(t), std::abs(bias + e * e * egh), opt.tolerance);
      }
    }
  }

  double cross = 0.0;
  for (int t = 1; t <= m; ++t)
    for (int t2 = 1; t2 <= m; ++t2) {
      if (t2 == t || t2 == t + 1) continue;
      Perturbation p = Perturbation::none(m);
      p.representer[static_cast<std::size_t>(t - 1)] = random_grid_fn(dgp, t, rng);
      p.regression[static_cast<std::size_t>(t2 - 1)] = random_grid_fn(dgp, t2, rng);
      cross = std::max(cross, std::abs(population_moment(dgp, functional, apply(truth, p, 1e-2)) - theta));
    }
  residual("cross_period_bias", cross, 1e-12);

  double worst_mixed = 0.0, worst_dr_f = 0.0, worst_dr_a = 0.0;
  for (int draw = 0; draw < opt.mixed_bias_draws; ++draw) {
    Perturbation f_only = Perturbation::none(m), a_only = Perturbation::none(m), both = Perturbation::none(m);
    for (int t = 1; t <= m; ++t) {
      const auto i = static_cast<std::size_t>(t - 1);
      const LinearFn h = random_grid_fn(dgp, t, rng);
      const LinearFn g = random_grid_fn(dgp, t, rng);
      f_only.regression[i] = both.regression[i] = h;
      a_only.representer[i] = both.representer[i] = g;
    }
    const MixedBias mb = mixed_bias(dgp, functional, apply(truth, both), truth);
    worst_mixed = std::max(worst_mixed, std::abs(mb.direct - mb.formula));
    worst_dr_f = std::max(worst_dr_f, std::abs(population_moment(dgp, functional, apply(truth, f_only)) - theta));
    worst_dr_a = std::max(worst_dr_a, std::abs(population_moment(dgp, functional, apply(truth, a_only)) - theta));
  }
  residual("mixed_bias_identity", worst_mixed, opt.tolerance);
  residual("double_robustness_f_only", worst_dr_f, opt.tolerance);
  residual("double_robustness_a_only", worst_dr_a, opt.tolerance);
  return checks;
}

}  // namespace autodml
