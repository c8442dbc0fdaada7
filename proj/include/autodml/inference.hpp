#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "autodml/core.hpp"
#include "autodml/dgp.hpp"
#include "autodml/diagnostics.hpp"
#include "autodml/error.hpp"
#include "autodml/functional.hpp"
#include "autodml/moment.hpp"
#include "autodml/nuisance.hpp"
#include "autodml/oracle.hpp"
#include "autodml/parallel.hpp"
#include "autodml/random.hpp"

namespace autodml {

struct FoldPlan {
  std::vector<std::vector<std::size_t>> folds;
  std::uint64_t seed = 0;

  std::size_t size() const { return folds.size(); }

  // Everything outside fold q, in increasing row order.
  std::vector<std::size_t> complement(std::size_t q, std::size_t n) const {
    std::vector<bool> held(n, false);
    for (std::size_t i : folds.at(q)) held[i] = true;
    std::vector<std::size_t> out;
    out.reserve(n - folds[q].size());
    for (std::size_t i = 0; i < n; ++i)
      if (!held[i]) out.push_back(i);
    return out;
  }
};

// Fisher-Yates shuffle of 0..n-1 driven by Rng(seed), then a contiguous
// split; the first n mod Q folds take one extra row.
inline FoldPlan make_folds(std::size_t n, std::size_t q, std::uint64_t seed) {
  if (q < 2) throw ValidationError("number of folds must be >= 2");
  if (q > n) throw ValidationError("number of folds " + std::to_string(q) + " exceeds sample size " + std::to_string(n));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  FoldPlan plan;
  plan.seed = seed;
  const std::size_t base = n / q, extra = n % q;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < q; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    plan.folds.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                            perm.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return plan;
}

// Inverse standard normal CDF: Acklam's rational approximation polished by
// one Halley step on erfc.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("normal quantile needs p in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double low = 0.02425;
  double x = 0.0;
  if (p < low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

// Two-sided critical value; 1.96 exactly at the 95% level.
inline double critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in (0, 1)");
  if (level == 0.95) return 1.96;
  return normal_quantile(0.5 + level / 2.0);
}

struct FoldSummary {
  std::size_t fold = 0;
  std::size_t size = 0;
  double moment_mean = 0.0;
  double plug_in_mean = 0.0;
  std::vector<double> correction_means;        // held out, per period
  std::vector<double> train_correction_means;  // E_n over the training rows, per period
};

struct EstimateReport {
  double theta_hat = 0.0;
  double sigma_hat = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::size_t n = 0;
  std::size_t Q = 0;
  std::vector<FoldSummary> per_fold;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<double> scores;  // held-out psi_i in row order; not serialized
};

using NuisanceFitter = std::function<NuisanceSet(const PanelDataset& train, std::size_t fold)>;

struct EstimateOptions {
  bool clever_covariate = false;
  int jobs = 1;
  double level = 0.95;
  NuisanceFitter fitter;  // replaces fit_nuisances when set
};

inline std::string describe_penalties(const std::vector<std::optional<double>>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    os << (i ? "," : "");
    if (v[i]) os << *v[i];
    else os << "auto";
  }
  return v.empty() ? "auto" : os.str();
}

inline std::vector<std::pair<std::string, std::string>> describe_config(const FitConfig& cfg,
                                                                        const TreatmentFunctional& functional,
                                                                        std::size_t q, std::uint64_t seed,
                                                                        const EstimateOptions& opt) {
  std::vector<std::pair<std::string, std::string>> out;
  out.emplace_back("plan", functional.description());
  std::string maps;
  for (std::size_t t = 0; t < cfg.features.size(); ++t)
    maps += (t ? ";" : "") + (cfg.features[t] ? cfg.features[t]->describe() : std::string("none"));
  out.emplace_back("features", maps);
  out.emplace_back("lambda_regression", describe_penalties(cfg.lambda_regression));
  out.emplace_back("lambda_riesz", describe_penalties(cfg.lambda_riesz));
  std::ostringstream clip;
  if (cfg.clip) clip << *cfg.clip;
  else clip << "none";
  out.emplace_back("clip", clip.str());
  out.emplace_back("folds", std::to_string(q));
  out.emplace_back("seed", std::to_string(seed));
  out.emplace_back("clever_covariate", opt.clever_covariate ? "true" : "false");
  std::ostringstream level;
  level << opt.level;
  out.emplace_back("level", level.str());
  out.emplace_back("variance", "mean squared deviation of held-out scores");
  return out;
}

// theta_hat, sigma_hat and the CI from held-out scores.
inline void summarize_scores(EstimateReport& r, double level) {
  const double n = static_cast<double>(r.scores.size());
  double sum = 0.0;
  for (double s : r.scores) sum += s;
  r.theta_hat = sum / n;
  double ss = 0.0;
  for (double s : r.scores) ss += (s - r.theta_hat) * (s - r.theta_hat);
  r.sigma_hat = std::sqrt(ss / n);
  const double half = critical_value(level) * r.sigma_hat / std::sqrt(n);
  r.ci_lower = r.theta_hat - half;
  r.ci_upper = r.theta_hat + half;
}

// Cross-fitted estimate: nuisances trained on each fold's complement, scored
// on the fold; aggregation runs in row order regardless of `jobs`.
inline EstimateReport dml_estimate(const PanelDataset& data, const TreatmentFunctional& functional,
                                   const FitConfig& cfg, std::size_t q, std::uint64_t seed,
                                   const EstimateOptions& opt = {}) {
  if (functional.periods() != data.periods())
    throw ValidationError("plan has " + std::to_string(functional.periods()) + " periods but the data has " +
                          std::to_string(data.periods()));
  if (!opt.fitter) cfg.validate(data);
  const std::size_t n = data.size();
  const FoldPlan plan = make_folds(n, q, seed);
  const int m = data.periods();

  EstimateReport report;
  report.n = n;
  report.Q = q;
  report.seed = seed;
  report.config = describe_config(cfg, functional, q, seed, opt);
  report.scores.assign(n, 0.0);
  report.per_fold.resize(q);

  parallel_for(q, opt.jobs, [&](std::size_t f) {
    const auto train_rows = plan.complement(f, n);
    const PanelDataset train = data.subset(train_rows);
    NuisanceSet nuisances = [&] {
      try {
        return opt.fitter ? opt.fitter(train, f) : fit_nuisances(train, functional, cfg, opt.clever_covariate);
      } catch (const NumericalError& e) {
        throw NumericalError("fold " + std::to_string(f + 1) + ": " + e.what());
      }
    }();
    FoldSummary& s = report.per_fold[f];
    s.fold = f + 1;
    s.size = plan.folds[f].size();
    s.correction_means.assign(static_cast<std::size_t>(m), 0.0);
    s.train_correction_means.assign(static_cast<std::size_t>(m), 0.0);
    for (std::size_t i : plan.folds[f]) {
      const MomentValue v = orthogonal_moment(data[i], functional, nuisances);
      report.scores[i] = v.value;
      s.moment_mean += v.value;
      s.plug_in_mean += v.plug_in;
      for (int t = 0; t < m; ++t) s.correction_means[t] += v.corrections[t];
    }
    const double size = static_cast<double>(s.size);
    s.moment_mean /= size;
    s.plug_in_mean /= size;
    for (double& c : s.correction_means) c /= size;
    for (const auto& z : train.trajectories()) {
      const MomentValue v = orthogonal_moment(z, functional, nuisances);
      for (int t = 0; t < m; ++t) s.train_correction_means[t] += v.corrections[t];
    }
    for (double& c : s.train_correction_means) c /= static_cast<double>(train.size());
  });
  summarize_scores(report, opt.level);
  return report;
}

struct McRow {
  std::size_t rep = 0;
  double theta_hat = std::numeric_limits<double>::quiet_NaN();
  double sigma_hat = std::numeric_limits<double>::quiet_NaN();
  double ci_lower = std::numeric_limits<double>::quiet_NaN();
  double ci_upper = std::numeric_limits<double>::quiet_NaN();
  bool covered = false;
  bool failed = false;
  std::string error;
};

struct McSummary {
  double theta = 0.0;
  std::size_t reps = 0;
  std::size_t failures = 0;
  double bias = 0.0;
  double rmse = 0.0;
  double mean_sigma = 0.0;
  double mean_width = 0.0;
  double coverage = 0.0;
  std::vector<McRow> rows;
};

// Replicate r simulates with mix_seed(seed, r) and folds with
// mix_seed(mix_seed(seed, r), 1). Failed replicates are kept as flagged rows
// and excluded from every average.
inline McSummary mc_experiment(const DiscreteDGP& dgp, const TreatmentFunctional& functional, const FitConfig& cfg,
                               std::size_t reps, std::size_t n, std::size_t q, std::uint64_t seed, int jobs = 1,
                               EstimateOptions opt = {}) {
  if (reps < 1) throw ValidationError("reps must be >= 1");
  if (n < 1) throw ValidationError("n must be >= 1");
  McSummary out;
  out.theta = oracle_theta(dgp, functional);
  out.reps = reps;
  out.rows.resize(reps);
  opt.jobs = 1;
  parallel_for(reps, jobs, [&](std::size_t r) {
    McRow& row = out.rows[r];
    row.rep = r;
    const std::uint64_t rep_seed = mix_seed(seed, r);
    try {
      const PanelDataset data = dgp.simulate(n, rep_seed);
      const EstimateReport rep = dml_estimate(data, functional, cfg, q, mix_seed(rep_seed, 1), opt);
      row.theta_hat = rep.theta_hat;
      row.sigma_hat = rep.sigma_hat;
      row.ci_lower = rep.ci_lower;
      row.ci_upper = rep.ci_upper;
      row.covered = rep.ci_lower <= out.theta && out.theta <= rep.ci_upper;
    } catch (const NumericalError& e) {
      row.failed = true;
      row.error = e.what();
    }
  });
  double sum = 0.0, sq = 0.0, sig = 0.0, width = 0.0, cov = 0.0;
  for (const auto& row : out.rows) {
    if (row.failed) {
      ++out.failures;
      continue;
    }
    sum += row.theta_hat - out.theta;
    sq += (row.theta_hat - out.theta) * (row.theta_hat - out.theta);
    sig += row.sigma_hat;
    width += row.ci_upper - row.ci_lower;
    cov += row.covered ? 1.0 : 0.0;
  }
  const double ok = static_cast<double>(reps - out.failures);
  if (ok > 0) {
    out.bias = sum / ok;
    out.rmse = std::sqrt(sq / ok);
    out.mean_sigma = sig / ok;
    out.mean_width = width / ok;
    out.coverage = cov / ok;
  }
  return out;
}

struct RateRow {
  std::size_t n = 0;
  int period = 0;
  double f_error = 0.0;  // root mean square over replicates of ||f_hat_t - f_t||_2
  double a_error = 0.0;
  double scaled_product = 0.0;  // sqrt(n) * f_error * a_error
};

struct RateTable {
  std::vector<RateRow> rows;
  // Per period, log-log slopes against n. A quantity that is zero at every
  // n gets slope -infinity.
  std::vector<double> f_slope, a_slope, product_slope;
  std::vector<bool> product_trending_to_zero;
};

using FullSampleFitter = std::function<NuisanceSet(const PanelDataset&)>;

// L2 errors of full-sample nuisance fits against the enumeration oracle
// across sample sizes; products flagged when their slope exceeds -0.25.
inline RateTable rate_table(const DiscreteDGP& dgp, const TreatmentFunctional& functional, const FitConfig& cfg,
                            const std::vector<std::size_t>& sizes, std::size_t reps, std::uint64_t seed,
                            int jobs = 1, FullSampleFitter fitter = {}) {
  if (sizes.size() < 2) throw ValidationError("rate table needs at least two sample sizes");
  if (reps < 1) throw ValidationError("reps must be >= 1");
  const NuisanceSet truth = oracle_nuisances(dgp, functional);
  const int m = dgp.periods();
  const std::size_t cells = sizes.size() * reps;
  std::vector<std::vector<std::pair<double, double>>> errs(cells);
  parallel_for(cells, jobs, [&](std::size_t c) {
    const std::size_t k = c / reps, r = c % reps;
    const PanelDataset data = dgp.simulate(sizes[k], mix_seed(mix_seed(seed, k), r));
    const NuisanceSet fit = fitter ? fitter(data) : fit_nuisances(data, functional, cfg);
    for (int t = 1; t <= m; ++t)
      errs[c].emplace_back(population_l2_distance(dgp, t, fit.regression(t), truth.regression(t)),
                           population_l2_distance(dgp, t, fit.representer(t), truth.representer(t)));
  });
  RateTable table;
  for (std::size_t k = 0; k < sizes.size(); ++k)
    for (int t = 1; t <= m; ++t) {
      RateRow row;
      row.n = sizes[k];
      row.period = t;
      for (std::size_t r = 0; r < reps; ++r) {
        const auto [fe, ae] = errs[k * reps + r][static_cast<std::size_t>(t - 1)];
        row.f_error += fe * fe;
        row.a_error += ae * ae;
      }
      row.f_error = std::sqrt(row.f_error / static_cast<double>(reps));
      row.a_error = std::sqrt(row.a_error / static_cast<double>(reps));
      row.scaled_product = std::sqrt(static_cast<double>(row.n)) * row.f_error * row.a_error;
      table.rows.push_back(row);
    }
  auto slope_of = [&](int t, auto field) {
    std::vector<double> xs, ys;
    for (const auto& row : table.rows)
      if (row.period == t && field(row) > 0.0) {
        xs.push_back(static_cast<double>(row.n));
        ys.push_back(field(row));
      }
    return xs.size() >= 2 ? loglog_slope(xs, ys) : -std::numeric_limits<double>::infinity();
  };
  for (int t = 1; t <= m; ++t) {
    table.f_slope.push_back(slope_of(t, [](const RateRow& r) { return r.f_error; }));
    table.a_slope.push_back(slope_of(t, [](const RateRow& r) { return r.a_error; }));
    const double ps = slope_of(t, [](const RateRow& r) { return r.scaled_product; });
    table.product_slope.push_back(ps);
    table.product_trending_to_zero.push_back(ps <= -0.25);
  }
  return table;
}

}  // namespace autodml
