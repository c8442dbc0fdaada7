#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "autodml/csv.hpp"
#include "autodml/diagnostics.hpp"
#include "autodml/inference.hpp"
#include "autodml/surrogate.hpp"

namespace autodml::report {

using Json = nlohmann::ordered_json;

inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json numbers(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

inline Json to_json(const EstimateReport& r) {
  Json folds = Json::array();
  for (const auto& f : r.per_fold)
    folds.push_back({{"fold", f.fold},
                     {"size", f.size},
                     {"moment_mean", number(f.moment_mean)},
                     {"plug_in_mean", number(f.plug_in_mean)},
                     {"heldout_corrections", numbers(f.correction_means)},
                     {"train_corrections", numbers(f.train_correction_means)}});
  Json config = Json::object();
  for (const auto& [k, v] : r.config) config[k] = v;
  return {{"theta_hat", number(r.theta_hat)},
          {"sigma_hat", number(r.sigma_hat)},
          {"ci_lower", number(r.ci_lower)},
          {"ci_upper", number(r.ci_upper)},
          {"n", r.n},
          {"Q", r.Q},
          {"per_fold", folds},
          {"seed", r.seed},
          {"config", config}};
}

inline Json to_json(const SurrogateReport& r) {
  Json j = to_json(r.estimate);
  j["n_short"] = r.n_short;
  j["n_long"] = r.n_long;
  return j;
}

inline Json to_json(const std::vector<DiagnosticCheck>& checks) {
  Json list = Json::array();
  bool all = true;
  double worst = 0.0;
  for (const auto& c : checks) {
    all = all && c.passed;
    const bool slope = c.name.rfind("orthogonality_slope", 0) == 0;
    if (!slope) worst = std::max(worst, c.value);
    Json item = {{"name", c.name},
                 {"kind", slope ? "slope" : "residual"},
                 {"value", std::isinf(c.value) ? Json("inf") : number(c.value)},
                 {"threshold", number(c.threshold)},
                 {"passed", c.passed}};
    if (!c.detail.empty()) item["detail"] = c.detail;
    list.push_back(item);
  }
  return {{"passed", all}, {"max_residual", number(worst)}, {"checks", list}};
}

inline Json to_json(const McSummary& s) {
  return {{"theta", number(s.theta)},        {"reps", s.reps},
          {"failures", s.failures},          {"bias", number(s.bias)},
          {"rmse", number(s.rmse)},          {"mean_sigma_hat", number(s.mean_sigma)},
          {"mean_ci_width", number(s.mean_width)}, {"coverage", number(s.coverage)}};
}

inline Json to_json(const RateTable& t) {
  Json rows = Json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"n", r.n},
                    {"period", r.period},
                    {"f_error", number(r.f_error)},
                    {"a_error", number(r.a_error)},
                    {"scaled_product", number(r.scaled_product)}});
  Json periods = Json::array();
  for (std::size_t i = 0; i < t.f_slope.size(); ++i)
    periods.push_back({{"period", i + 1},
                       {"f_slope", number(t.f_slope[i])},
                       {"a_slope", number(t.a_slope[i])},
                       {"product_slope", number(t.product_slope[i])},
                       {"product_trending_to_zero", static_cast<bool>(t.product_trending_to_zero[i])}});
  return {{"rows", rows}, {"periods", periods}};
}

// Header rep,theta_hat,sigma_hat,ci_lower,ci_upper,covered,failed.
inline void write_mc_csv(std::ostream& out, const McSummary& s) {
  out << "rep,theta_hat,sigma_hat,ci_lower,ci_upper,covered,failed\n";
  for (const auto& r : s.rows) {
    out << r.rep << ',';
    if (r.failed) {
      out << ",,,,0,1\n";
      continue;
    }
    out << csv::format_double(r.theta_hat) << ',' << csv::format_double(r.sigma_hat) << ','
        << csv::format_double(r.ci_lower) << ',' << csv::format_double(r.ci_upper) << ',' << (r.covered ? 1 : 0)
        << ",0\n";
  }
}

}  // namespace autodml::report
