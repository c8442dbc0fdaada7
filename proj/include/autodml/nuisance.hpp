#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "autodml/core.hpp"
#include "autodml/error.hpp"
#include "autodml/features.hpp"
#include "autodml/functional.hpp"
#include "autodml/linear_fn.hpp"
#include "autodml/ridge.hpp"

namespace autodml {

// Penalties are per observation: the fitted system is (X'X/n + lambda I).
// A missing entry means the default from default_lambda().
struct FitConfig {
  std::vector<FeatureMapPtr> features;  // one per period, shared by f_t and a_t
  std::vector<std::optional<double>> lambda_regression;
  std::vector<std::optional<double>> lambda_riesz;
  std::optional<double> clip;  // applied to the representers

  static FitConfig with_features(std::vector<FeatureMapPtr> maps, std::optional<double> lambda = std::nullopt) {
    FitConfig cfg;
    cfg.features = std::move(maps);
    cfg.lambda_regression.assign(cfg.features.size(), lambda);
    cfg.lambda_riesz.assign(cfg.features.size(), lambda);
    return cfg;
  }

  std::optional<double> regression_penalty(int t) const { return at(lambda_regression, t); }
  std::optional<double> riesz_penalty(int t) const { return at(lambda_riesz, t); }
  const FeatureMapPtr& feature_map(int t) const { return features.at(static_cast<std::size_t>(t - 1)); }

  void validate(const PanelDataset& data) const {
    if (static_cast<int>(features.size()) != data.periods())
      throw ValidationError("fit config has " + std::to_string(features.size()) + " feature maps for " +
                            std::to_string(data.periods()) + " periods");
    for (int t = 1; t <= data.periods(); ++t) {
      const auto& map = feature_map(t);
      if (!map) throw ValidationError("fit config: no feature map at period " + std::to_string(t));
      if (map->state_dim() != data.state_dim(t) || map->treatment_arity() != data.treatment_arity(t))
        throw ValidationError("feature map at period " + std::to_string(t) + " (" + map->describe() +
                              ") does not match the data's state dimension or treatment arity");
    }
    for (const auto* lambdas : {&lambda_regression, &lambda_riesz})
      for (const auto& l : *lambdas)
        if (l && !(*l >= 0.0)) throw ValidationError("ridge penalty must be >= 0");
    if (clip && !(*clip > 0.0)) throw ValidationError("clip bound must be > 0");
  }

 private:
  static std::optional<double> at(const std::vector<std::optional<double>>& v, int t) {
    const auto i = static_cast<std::size_t>(t - 1);
    return i < v.size() ? v[i] : std::nullopt;
  }
};

namespace detail {

inline Eigen::MatrixXd design_matrix(const PanelDataset& data, int t, const FeatureMap& map) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(map.size()));
  Eigen::VectorXd row(static_cast<Eigen::Index>(map.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    map.evaluate(data[i].state(t), data[i].treatment(t), std::span<double>(row.data(), map.size()));
    x.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return x;
}

inline std::string at_period(int t, const std::string& what) {
  return "period " + std::to_string(t) + " " + what + ": ";
}

// u_i = Y_i at t = M, else m_{t+1}(Z_i; f_{t+1}).
inline Eigen::VectorXd pseudo_outcomes(const PanelDataset& data, const TreatmentFunctional& functional, int t,
                                       const LinearFn* next) {
  Eigen::VectorXd u(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i)
    u(static_cast<Eigen::Index>(i)) = next ? evaluate_moment(functional, t + 1, data[i], *next) : data[i].outcome;
  return u;
}

// Regression of u on phi_t, with an optional unpenalized extra column given
// by `clever` evaluated at (S_t, T_t).
inline LinearFn fit_period_regression(const PanelDataset& data, int t, const FitConfig& cfg, const Eigen::VectorXd& u,
                                      const LinearFn* clever) {
  const FeatureMapPtr& map = cfg.feature_map(t);
  const Eigen::MatrixXd x = design_matrix(data, t, *map);
  const double n = static_cast<double>(data.size());
  const Eigen::Index p = x.cols();
  const Eigen::MatrixXd gram = x.transpose() * x / n;
  const double lambda = cfg.regression_penalty(t).value_or(default_lambda(gram, data.size()));

  Eigen::VectorXd column;
  if (clever) {
    column.resize(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i)
      column(static_cast<Eigen::Index>(i)) = (*clever)(data[i].state(t), data[i].treatment(t));
    if (column.cwiseAbs().maxCoeff() == 0.0) clever = nullptr;
  }
  try {
    if (!clever) return LinearFn(map, solve_penalized(gram, x.transpose() * u / n, lambda));
    Eigen::MatrixXd g(p + 1, p + 1);
    g.topLeftCorner(p, p) = gram;
    g.topRightCorner(p, 1) = x.transpose() * column / n;
    g.bottomLeftCorner(1, p) = g.topRightCorner(p, 1).transpose();
    g(p, p) = column.squaredNorm() / n;
    Eigen::VectorXd rhs(p + 1);
    rhs.head(p) = x.transpose() * u / n;
    rhs(p) = column.dot(u) / n;
    std::vector<bool> mask(static_cast<std::size_t>(p + 1), true);
    mask.back() = false;
    const Eigen::VectorXd beta = solve_penalized(g, rhs, lambda, mask);
    return LinearFn(map, beta.head(p)).with_offset(beta(p), std::make_shared<const LinearFn>(*clever));
  } catch (const NumericalError& e) {
    throw NumericalError(at_period(t, "regression") + e.what());
  }
}

}  // namespace detail

// Backward loop t = M..1 of ridge regressions on pseudo-outcomes.
inline std::vector<LinearFn> fit_nested_regressions(const PanelDataset& data, const TreatmentFunctional& functional,
                                                    const FitConfig& cfg) {
  cfg.validate(data);
  if (functional.periods() != data.periods()) throw ValidationError("functional and data disagree on periods");
  const int m = data.periods();
  std::vector<std::optional<LinearFn>> out(static_cast<std::size_t>(m));
  for (int t = m; t >= 1; --t) {
    const LinearFn* next = t == m ? nullptr : &*out[static_cast<std::size_t>(t)];
    const Eigen::VectorXd u = detail::pseudo_outcomes(data, functional, t, next);
    out[static_cast<std::size_t>(t - 1)] = detail::fit_period_regression(data, t, cfg, u, nullptr);
  }
  std::vector<LinearFn> fns;
  for (auto& f : out) fns.push_back(std::move(*f));
  return fns;
}

// E_n[a(S_t,T_t)^2 - 2 prev(S_{t-1},T_{t-1}) m_t(Z; a)]; prev is ignored at t = 1.
inline double riesz_loss(const LinearFn& candidate, const PanelDataset& data, const TreatmentFunctional& functional,
                         int t, const LinearFn& prev) {
  double acc = 0.0;
  for (const auto& z : data.trajectories()) {
    const double a = candidate(z.state(t), z.treatment(t));
    const double pv = t == 1 ? 1.0 : prev(z.state(t - 1), z.treatment(t - 1));
    acc += a * a - 2.0 * pv * evaluate_moment(functional, t, z, candidate);
  }
  return acc / static_cast<double>(data.size());
}

// The quadratic pieces of the penalized Riesz loss at period t:
// gram = E_n[phi phi'], rhs = E_n[prev * Phi_t].
struct RieszSystem {
  Eigen::MatrixXd gram;
  Eigen::VectorXd rhs;
  double lambda = 0.0;
};

inline RieszSystem riesz_system(const PanelDataset& data, const TreatmentFunctional& functional, const FitConfig& cfg,
                                int t, const LinearFn* prev) {
  const FeatureMapPtr& map = cfg.feature_map(t);
  const Eigen::MatrixXd x = detail::design_matrix(data, t, *map);
  const double n = static_cast<double>(data.size());
  RieszSystem sys;
  sys.gram = x.transpose() * x / n;
  sys.rhs = Eigen::VectorXd::Zero(x.cols());
  for (const auto& z : data.trajectories()) {
    const double pv = t == 1 ? 1.0 : (*prev)(z.state(t - 1), z.treatment(t - 1));
    if (pv == 0.0) continue;
    sys.rhs += pv * moment_features(functional, t, prefix_of(z, t), *map);
  }
  sys.rhs /= n;
  sys.lambda = cfg.riesz_penalty(t).value_or(default_lambda(sys.gram, data.size()));
  return sys;
}

// Forward loop t = 1..M; each a_t minimizes the penalized empirical loss in
// closed form, with the clipped a_{t-1} feeding the next stage.
inline std::vector<LinearFn> fit_recursive_riesz(const PanelDataset& data, const TreatmentFunctional& functional,
                                                 const FitConfig& cfg) {
  cfg.validate(data);
  if (functional.periods() != data.periods()) throw ValidationError("functional and data disagree on periods");
  std::vector<LinearFn> out;
  for (int t = 1; t <= data.periods(); ++t) {
    const RieszSystem sys = riesz_system(data, functional, cfg, t, t == 1 ? nullptr : &out.back());
    try {
      out.push_back(LinearFn(cfg.feature_map(t), solve_penalized(sys.gram, sys.rhs, sys.lambda), cfg.clip));
    } catch (const NumericalError& e) {
      throw NumericalError(detail::at_period(t, "representer") + e.what());
    }
  }
  return out;
}

// Backward regressions with a_t as an extra unpenalized column, so that
// E_n[a_t (u_{t+1} - f_t)] = 0 at every period.
inline std::vector<LinearFn> fit_clever_covariate(const PanelDataset& data, const TreatmentFunctional& functional,
                                                  const std::vector<LinearFn>& representers, const FitConfig& cfg) {
  cfg.validate(data);
  if (functional.periods() != data.periods()) throw ValidationError("functional and data disagree on periods");
  const int m = data.periods();
  if (static_cast<int>(representers.size()) != m) throw ValidationError("one representer per period is required");
  std::vector<std::optional<LinearFn>> out(static_cast<std::size_t>(m));
  for (int t = m; t >= 1; --t) {
    const LinearFn* next = t == m ? nullptr : &*out[static_cast<std::size_t>(t)];
    const Eigen::VectorXd u = detail::pseudo_outcomes(data, functional, t, next);
    out[static_cast<std::size_t>(t - 1)] =
        detail::fit_period_regression(data, t, cfg, u, &representers[static_cast<std::size_t>(t - 1)]);
  }
  std::vector<LinearFn> fns;
  for (auto& f : out) fns.push_back(std::move(*f));
  return fns;
}

// Representers first, then regressions (with the clever column if asked).
inline NuisanceSet fit_nuisances(const PanelDataset& data, const TreatmentFunctional& functional, const FitConfig& cfg,
                                 bool clever_covariate = false) {
  std::vector<LinearFn> a = fit_recursive_riesz(data, functional, cfg);
  std::vector<LinearFn> f = clever_covariate ? fit_clever_covariate(data, functional, a, cfg)
                                             : fit_nested_regressions(data, functional, cfg);
  return NuisanceSet(std::move(f), std::move(a));
}

}  // namespace autodml
