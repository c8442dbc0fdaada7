#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "autodml/error.hpp"
#include "autodml/features.hpp"
#include "autodml/inference.hpp"
#include "autodml/linear_fn.hpp"
#include "autodml/parallel.hpp"
#include "autodml/random.hpp"
#include "autodml/ridge.hpp"

namespace autodml {

struct ShortRecord {
  std::vector<double> x;
  int t = 0;
  std::vector<double> s;
  bool operator==(const ShortRecord&) const = default;
};

struct LongRecord {
  std::vector<double> x;
  std::vector<double> s;
  double y = 0.0;
  bool operator==(const LongRecord&) const = default;
};

// Short sample (X, T, S) and long sample (X, S, Y) sharing dim X and dim S.
class SurrogatePair {
 public:
  SurrogatePair(std::vector<ShortRecord> short_sample, std::vector<LongRecord> long_sample)
      : short_(std::move(short_sample)), long_(std::move(long_sample)) {
    if (short_.empty()) throw ValidationError("short-term sample is empty");
    if (long_.empty()) throw ValidationError("long-term sample is empty");
    x_dim_ = static_cast<int>(short_.front().x.size());
    s_dim_ = static_cast<int>(short_.front().s.size());
    if (s_dim_ < 1) throw ValidationError("surrogate dimension must be >= 1");
    for (std::size_t i = 0; i < short_.size(); ++i) {
      const auto& r = short_[i];
      if (static_cast<int>(r.x.size()) != x_dim_ || static_cast<int>(r.s.size()) != s_dim_)
        throw ValidationError("short-term row " + std::to_string(i) + ": inconsistent dimensions");
      if (r.t != 0 && r.t != 1) throw ValidationError("short-term row " + std::to_string(i) + ": treatment must be 0 or 1");
    }
    for (std::size_t i = 0; i < long_.size(); ++i) {
      const auto& r = long_[i];
      if (static_cast<int>(r.x.size()) != x_dim_ || static_cast<int>(r.s.size()) != s_dim_)
        throw ValidationError("long-term row " + std::to_string(i) + ": inconsistent dimensions");
      if (!std::isfinite(r.y)) throw ValidationError("long-term row " + std::to_string(i) + ": outcome is not finite");
    }
  }

  const std::vector<ShortRecord>& short_sample() const { return short_; }
  const std::vector<LongRecord>& long_sample() const { return long_; }
  int x_dim() const { return x_dim_; }
  int s_dim() const { return s_dim_; }

  SurrogatePair subset(std::span<const std::size_t> short_rows, std::span<const std::size_t> long_rows) const {
    std::vector<ShortRecord> s;
    std::vector<LongRecord> l;
    for (std::size_t i : short_rows) s.push_back(short_.at(i));
    for (std::size_t i : long_rows) l.push_back(long_.at(i));
    return SurrogatePair(std::move(s), std::move(l));
  }

  bool operator==(const SurrogatePair&) const = default;

 private:
  std::vector<ShortRecord> short_;
  std::vector<LongRecord> long_;
  int x_dim_ = 0;
  int s_dim_ = 0;
};

// The (S, X) state vector used by h and a2: surrogates first.
inline std::vector<double> sx_state(std::span<const double> s, std::span<const double> x) {
  std::vector<double> v(s.begin(), s.end());
  v.insert(v.end(), x.begin(), x.end());
  return v;
}

// Feature maps: treatment_features over state X with K = 2 (g and a1);
// surrogate_features over state (S, X) with K = 1 (h and a2). Penalties are
// per observation, nullopt meaning the default.
struct SurrogateConfig {
  FeatureMapPtr treatment_features;
  FeatureMapPtr surrogate_features;
  std::optional<double> lambda_h, lambda_g, lambda_a1, lambda_a2;
  std::optional<double> clip;  // applied to a1 and a2

  void validate(const SurrogatePair& data) const {
    if (!treatment_features || !surrogate_features) throw ValidationError("surrogate config needs both feature maps");
    if (treatment_features->treatment_arity() != 2 || treatment_features->state_dim() != data.x_dim())
      throw ValidationError("treatment features must take X (dimension " + std::to_string(data.x_dim()) +
                            ") with two treatment levels");
    if (surrogate_features->treatment_arity() != 1 ||
        surrogate_features->state_dim() != data.x_dim() + data.s_dim())
      throw ValidationError("surrogate features must take (S, X) (dimension " +
                            std::to_string(data.x_dim() + data.s_dim()) + ") with a single level");
    for (const auto& l : {lambda_h, lambda_g, lambda_a1, lambda_a2})
      if (l && !(*l >= 0.0)) throw ValidationError("ridge penalty must be >= 0");
    if (clip && !(*clip > 0.0)) throw ValidationError("clip bound must be > 0");
  }
};

struct SurrogateNuisances {
  LinearFn h;   // E_l[Y | S, X]
  LinearFn g;   // E_s[h(S, X) | T, X]
  LinearFn a1;  // representer of E_s[g(1, X) - g(0, X)]
  LinearFn a2;  // representer of E_s[a1(T, X) h(S, X)] under D_l

  double h_at(std::span<const double> s, std::span<const double> x) const { return h(sx_state(s, x), 0); }
  double a2_at(std::span<const double> s, std::span<const double> x) const { return a2(sx_state(s, x), 0); }
};

namespace detail {

inline LinearFn solve_component(const FeatureMapPtr& map, const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs,
                                std::optional<double> lambda, std::size_t n, const char* name,
                                std::optional<double> clip = std::nullopt) {
  try {
    return LinearFn(map, solve_penalized(gram, rhs, lambda.value_or(default_lambda(gram, n))), clip);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("surrogate component ") + name + ": " + e.what());
  }
}

}  // namespace detail

inline SurrogateNuisances surrogate_fit(const SurrogatePair& data, const SurrogateConfig& cfg) {
  cfg.validate(data);
  const auto& sh = data.short_sample();
  const auto& lg = data.long_sample();
  const FeatureMap& tx = *cfg.treatment_features;
  const FeatureMap& sx = *cfg.surrogate_features;
  const double ns = static_cast<double>(sh.size()), nl = static_cast<double>(lg.size());

  Eigen::MatrixXd xl(static_cast<Eigen::Index>(lg.size()), static_cast<Eigen::Index>(sx.size()));
  Eigen::VectorXd yl(static_cast<Eigen::Index>(lg.size()));
  for (std::size_t i = 0; i < lg.size(); ++i) {
    xl.row(static_cast<Eigen::Index>(i)) = sx(sx_state(lg[i].s, lg[i].x), 0).transpose();
    yl(static_cast<Eigen::Index>(i)) = lg[i].y;
  }
  const Eigen::MatrixXd gram_l = xl.transpose() * xl / nl;
  LinearFn h = detail::solve_component(cfg.surrogate_features, gram_l, xl.transpose() * yl / nl, cfg.lambda_h,
                                       lg.size(), "h");

  Eigen::MatrixXd xs(static_cast<Eigen::Index>(sh.size()), static_cast<Eigen::Index>(tx.size()));
  Eigen::VectorXd hs(static_cast<Eigen::Index>(sh.size()));
  Eigen::VectorXd contrast = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(tx.size()));
  for (std::size_t i = 0; i < sh.size(); ++i) {
    xs.row(static_cast<Eigen::Index>(i)) = tx(sh[i].x, sh[i].t).transpose();
    hs(static_cast<Eigen::Index>(i)) = h(sx_state(sh[i].s, sh[i].x), 0);
    contrast += tx(sh[i].x, 1) - tx(sh[i].x, 0);
  }
  const Eigen::MatrixXd gram_s = xs.transpose() * xs / ns;
  LinearFn g = detail::solve_component(cfg.treatment_features, gram_s, xs.transpose() * hs / ns, cfg.lambda_g,
                                       sh.size(), "g");
  LinearFn a1 =
      detail::solve_component(cfg.treatment_features, gram_s, contrast / ns, cfg.lambda_a1, sh.size(), "a1", cfg.clip);

  Eigen::VectorXd cross = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sx.size()));
  for (const auto& r : sh) cross += a1(r.x, r.t) * sx(sx_state(r.s, r.x), 0);
  LinearFn a2 =
      detail::solve_component(cfg.surrogate_features, gram_l, cross / ns, cfg.lambda_a2, lg.size(), "a2", cfg.clip);
  return {std::move(h), std::move(g), std::move(a1), std::move(a2)};
}

// Short-sample score g(1,X) - g(0,X) + a1(T,X)(h(S,X) - g(T,X)).
inline double surrogate_short_score(const ShortRecord& r, const SurrogateNuisances& nu) {
  const double gt = nu.g(r.x, r.t);
  return nu.g(r.x, 1) - nu.g(r.x, 0) + nu.a1(r.x, r.t) * (nu.h_at(r.s, r.x) - gt);
}

// Long-sample score a2(S,X)(Y - h(S,X)).
inline double surrogate_long_score(const LongRecord& r, const SurrogateNuisances& nu) {
  return nu.a2_at(r.s, r.x) * (r.y - nu.h_at(r.s, r.x));
}

struct SurrogateReport {
  EstimateReport estimate;  // n = n_short; sigma_hat on the short-sample scale
  std::size_t n_short = 0;
  std::size_t n_long = 0;
  double variance_short = 0.0;
  double variance_long = 0.0;
  std::vector<double> long_scores;  // held-out, row order; not serialized
};

using SurrogateFitter = std::function<SurrogateNuisances(const SurrogatePair& train, std::size_t fold)>;

// Independent fold plans per sample: short rows with make_folds(n_s, Q, seed),
// long rows with make_folds(n_l, Q, mix_seed(seed, 1)); fold q pairs the two.
// sigma^2 = V_s + V_l n_s / n_l, reported with n = n_s.
inline SurrogateReport surrogate_estimate(const SurrogatePair& data, const SurrogateConfig& cfg, std::size_t q,
                                          std::uint64_t seed, int jobs = 1, double level = 0.95,
                                          SurrogateFitter fitter = {}) {
  if (!fitter) cfg.validate(data);
  const std::size_t ns = data.short_sample().size(), nl = data.long_sample().size();
  const FoldPlan short_plan = make_folds(ns, q, seed);
  const FoldPlan long_plan = make_folds(nl, q, mix_seed(seed, 1));

  SurrogateReport out;
  out.n_short = ns;
  out.n_long = nl;
  EstimateReport& r = out.estimate;
  r.n = ns;
  r.Q = q;
  r.seed = seed;
  r.scores.assign(ns, 0.0);
  out.long_scores.assign(nl, 0.0);
  r.per_fold.resize(q);

  parallel_for(q, jobs, [&](std::size_t f) {
    const auto s_train = short_plan.complement(f, ns);
    const auto l_train = long_plan.complement(f, nl);
    const SurrogatePair train = data.subset(s_train, l_train);
    const SurrogateNuisances nu = [&] {
      try {
        return fitter ? fitter(train, f) : surrogate_fit(train, cfg);
      } catch (const NumericalError& e) {
        throw NumericalError("fold " + std::to_string(f + 1) + ": " + e.what());
      }
    }();
    FoldSummary& s = r.per_fold[f];
    s.fold = f + 1;
    s.size = short_plan.folds[f].size();
    double short_mean = 0.0, long_mean = 0.0, plug = 0.0, corr = 0.0;
    for (std::size_t i : short_plan.folds[f]) {
      const ShortRecord& rec = data.short_sample()[i];
      r.scores[i] = surrogate_short_score(rec, nu);
      short_mean += r.scores[i];
      plug += nu.g(rec.x, 1) - nu.g(rec.x, 0);
      corr += r.scores[i] - (nu.g(rec.x, 1) - nu.g(rec.x, 0));
    }
    for (std::size_t i : long_plan.folds[f]) {
      out.long_scores[i] = surrogate_long_score(data.long_sample()[i], nu);
      long_mean += out.long_scores[i];
    }
    const double a = static_cast<double>(short_plan.folds[f].size());
    const double b = static_cast<double>(long_plan.folds[f].size());
    s.moment_mean = short_mean / a + long_mean / b;
    s.plug_in_mean = plug / a;
    s.correction_means = {corr / a, long_mean / b};
  });

  double ms = 0.0, ml = 0.0;
  for (double v : r.scores) ms += v;
  for (double v : out.long_scores) ml += v;
  ms /= static_cast<double>(ns);
  ml /= static_cast<double>(nl);
  double vs = 0.0, vl = 0.0;
  for (double v : r.scores) vs += (v - ms) * (v - ms);
  for (double v : out.long_scores) vl += (v - ml) * (v - ml);
  out.variance_short = vs / static_cast<double>(ns);
  out.variance_long = vl / static_cast<double>(nl);
  r.theta_hat = ms + ml;
  r.sigma_hat =
      std::sqrt(out.variance_short + out.variance_long * static_cast<double>(ns) / static_cast<double>(nl));
  const double half = critical_value(level) * r.sigma_hat / std::sqrt(static_cast<double>(ns));
  r.ci_lower = r.theta_hat - half;
  r.ci_upper = r.theta_hat + half;

  auto describe = [](std::optional<double> v) {
    std::ostringstream os;
    if (v) os << *v;
    else os << "auto";
    return os.str();
  };
  r.config = {{"treatment_features", cfg.treatment_features ? cfg.treatment_features->describe() : "none"},
              {"surrogate_features", cfg.surrogate_features ? cfg.surrogate_features->describe() : "none"},
              {"lambda_h", describe(cfg.lambda_h)},
              {"lambda_g", describe(cfg.lambda_g)},
              {"lambda_a1", describe(cfg.lambda_a1)},
              {"lambda_a2", describe(cfg.lambda_a2)},
              {"clip", cfg.clip ? describe(cfg.clip) : "none"},
              {"folds", std::to_string(q)},
              {"seed", std::to_string(seed)},
              {"variance", "V_short + V_long * n_short / n_long, reported with n = n_short"}};
  return out;
}

// Enumerable two-sample law on finite grids X in 0..x_arity-1 and
// S in 0..s_arity-1, both one-dimensional. The short law is
// P_s(X) P_s(T | X) P(S | T, X); the long law is P_l(X) P_l(S | X); both
// share E[Y | S, X] = outcome_mean[s][x].
class SurrogateLaw {
 public:
  struct Spec {
    int x_arity = 1;
    int s_arity = 2;
    std::vector<double> short_x;           // P_s(X = x)
    std::vector<double> propensity;        // P_s(T = 1 | X = x)
    std::vector<Table> surrogate;          // [t][x][s] = P(S = s | T = t, X = x)
    std::vector<double> long_x;            // P_l(X = x)
    Table long_surrogate;                  // [x][s] = P_l(S = s | X = x)
    Table outcome_mean;                    // [s][x]
    double sigma_y = 0.0;
  };

  explicit SurrogateLaw(Spec spec) : spec_(std::move(spec)) { validate(); }

  // Long law equal to the short law's (S, X) marginal.
  static Spec matched(Spec spec) {
    spec.long_x = spec.short_x;
    spec.long_surrogate.assign(static_cast<std::size_t>(spec.x_arity),
                               std::vector<double>(static_cast<std::size_t>(spec.s_arity), 0.0));
    for (int x = 0; x < spec.x_arity; ++x)
      for (int t = 0; t < 2; ++t)
        for (int s = 0; s < spec.s_arity; ++s)
          spec.long_surrogate[x][s] += (t ? spec.propensity[x] : 1.0 - spec.propensity[x]) * spec.surrogate[t][x][s];
    return spec;
  }

  const Spec& spec() const { return spec_; }

  FeatureMapPtr treatment_map() const { return share(FeatureMap::tabular({spec_.x_arity}, 2)); }
  FeatureMapPtr surrogate_map() const { return share(FeatureMap::tabular({spec_.s_arity, spec_.x_arity}, 1)); }

  double p_short(int x, int t, int s) const {
    return spec_.short_x[x] * (t ? spec_.propensity[x] : 1.0 - spec_.propensity[x]) * spec_.surrogate[t][x][s];
  }
  double p_long(int x, int s) const { return spec_.long_x[x] * spec_.long_surrogate[x][s]; }

  template <typename Fn>
  double expect_short(Fn&& fn) const {
    double acc = 0.0;
    for (int x = 0; x < spec_.x_arity; ++x)
      for (int t = 0; t < 2; ++t)
        for (int s = 0; s < spec_.s_arity; ++s) {
          const double p = p_short(x, t, s);
          if (p > 0.0) acc += p * fn(ShortRecord{{double(x)}, t, {double(s)}});
        }
    return acc;
  }

  // Records carry y = E[Y | S, X].
  template <typename Fn>
  double expect_long(Fn&& fn) const {
    double acc = 0.0;
    for (int x = 0; x < spec_.x_arity; ++x)
      for (int s = 0; s < spec_.s_arity; ++s) {
        const double p = p_long(x, s);
        if (p > 0.0) acc += p * fn(LongRecord{{double(x)}, {double(s)}, spec_.outcome_mean[s][x]});
      }
    return acc;
  }

  double g0(int t, int x) const {
    double acc = 0.0;
    for (int s = 0; s < spec_.s_arity; ++s) acc += spec_.surrogate[t][x][s] * spec_.outcome_mean[s][x];
    return acc;
  }

  double ate() const {
    double acc = 0.0;
    for (int x = 0; x < spec_.x_arity; ++x) acc += spec_.short_x[x] * (g0(1, x) - g0(0, x));
    return acc;
  }

  SurrogateNuisances oracle_nuisances() const {
    const auto tmap = treatment_map();
    const auto smap = surrogate_map();
    const int nx = spec_.x_arity, ns = spec_.s_arity;
    Eigen::VectorXd h(ns * nx), a2(ns * nx), g(2 * nx), a1(2 * nx);
    for (int t = 0; t < 2; ++t)
      for (int x = 0; x < nx; ++x) {
        g(t * nx + x) = g0(t, x);
        const double pt = t ? spec_.propensity[x] : 1.0 - spec_.propensity[x];
        a1(t * nx + x) = pt > 0.0 ? (t ? 1.0 : -1.0) / pt : 0.0;
      }
    for (int s = 0; s < ns; ++s)
      for (int x = 0; x < nx; ++x) {
        h(s * nx + x) = spec_.outcome_mean[s][x];
        // a2 = E_s[a1 | S, X] p_s(S, X) / p_l(S, X) = sum_t a1(t, x) p_s(x, t, s) / p_l(x, s).
        double num = 0.0;
        for (int t = 0; t < 2; ++t) num += a1(t * nx + x) * p_short(x, t, s);
        const double den = p_long(x, s);
        if (den > 0.0) a2(s * nx + x) = num / den;
        else if (num != 0.0)
          throw ValidationError("surrogate law: long sample has no mass at s=" + std::to_string(s) +
                                ", x=" + std::to_string(x) + " where the short sample does");
        else a2(s * nx + x) = 0.0;
      }
    return {LinearFn(smap, h), LinearFn(tmap, g), LinearFn(tmap, a1), LinearFn(smap, a2)};
  }

  // Population value of the two-sample moment.
  double population_moment(const SurrogateNuisances& nu) const {
    return expect_short([&](const ShortRecord& r) { return surrogate_short_score(r, nu); }) +
           expect_long([&](const LongRecord& r) { return surrogate_long_score(r, nu); });
  }

  // R(a) = E_l[a(S,X)^2] - 2 E_s[a1(T,X) a(S,X)] with the true a1.
  double risk(const LinearFn& a) const {
    const LinearFn a1 = oracle_nuisances().a1;
    return expect_long([&](const LongRecord& r) {
             const double v = a(sx_state(r.s, r.x), 0);
             return v * v;
           }) -
           2.0 * expect_short([&](const ShortRecord& r) { return a1(r.x, r.t) * a(sx_state(r.s, r.x), 0); });
  }

  double long_l2_squared(const LinearFn& a, const LinearFn& b) const {
    return expect_long([&](const LongRecord& r) {
      const auto st = sx_state(r.s, r.x);
      const double d = a(st, 0) - b(st, 0);
      return d * d;
    });
  }

  // E_s[a1~ (h~ - g~)] - E_l[a2~ h~] with tildes alt - truth.
  double mixed_bias_formula(const SurrogateNuisances& alt, const SurrogateNuisances& truth) const {
    return expect_short([&](const ShortRecord& r) {
             const double da1 = alt.a1(r.x, r.t) - truth.a1(r.x, r.t);
             const double dh = alt.h_at(r.s, r.x) - truth.h_at(r.s, r.x);
             const double dg = alt.g(r.x, r.t) - truth.g(r.x, r.t);
             return da1 * (dh - dg);
           }) -
           expect_long([&](const LongRecord& r) {
             return (alt.a2_at(r.s, r.x) - truth.a2_at(r.s, r.x)) * (alt.h_at(r.s, r.x) - truth.h_at(r.s, r.x));
           });
  }

  // Short rows from Rng(mix_seed(seed, 0)), long rows from Rng(mix_seed(seed, 1)).
  SurrogatePair simulate(std::size_t n_short, std::size_t n_long, std::uint64_t seed) const {
    if (n_short < 1 || n_long < 1) throw ValidationError("n must be >= 1");
    Rng rs(mix_seed(seed, 0)), rl(mix_seed(seed, 1));
    std::vector<ShortRecord> sh;
    sh.reserve(n_short);
    for (std::size_t i = 0; i < n_short; ++i) {
      const int x = rs.categorical(spec_.short_x);
      const int t = rs.uniform() < spec_.propensity[x] ? 1 : 0;
      const int s = rs.categorical(spec_.surrogate[t][x]);
      sh.push_back({{double(x)}, t, {double(s)}});
    }
    std::vector<LongRecord> lg;
    lg.reserve(n_long);
    for (std::size_t i = 0; i < n_long; ++i) {
      const int x = rl.categorical(spec_.long_x);
      const int s = rl.categorical(spec_.long_surrogate[x]);
      const double noise = rl.normal();
      lg.push_back({{double(x)}, {double(s)}, spec_.outcome_mean[s][x] + spec_.sigma_y * noise});
    }
    return SurrogatePair(std::move(sh), std::move(lg));
  }

 private:
  static void check_distribution(const std::vector<double>& row, std::size_t width, const std::string& name) {
    if (row.size() != width) throw ValidationError("surrogate law table " + name + ": wrong length");
    double sum = 0.0;
    for (double v : row) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("surrogate law table " + name + ": negative entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ValidationError("surrogate law table " + name + ": does not sum to 1");
  }

  void validate() const {
    const auto nx = static_cast<std::size_t>(spec_.x_arity), ns = static_cast<std::size_t>(spec_.s_arity);
    if (spec_.x_arity < 1 || spec_.s_arity < 1) throw ValidationError("surrogate law arities must be >= 1");
    check_distribution(spec_.short_x, nx, "short_x");
    check_distribution(spec_.long_x, nx, "long_x");
    if (spec_.propensity.size() != nx) throw ValidationError("surrogate law: one propensity per x");
    for (double p : spec_.propensity)
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("surrogate law: propensity outside [0, 1]");
    if (spec_.surrogate.size() != 2) throw ValidationError("surrogate law: surrogate table needs t = 0 and t = 1");
    for (int t = 0; t < 2; ++t) {
      if (spec_.surrogate[t].size() != nx) throw ValidationError("surrogate law: surrogate table needs one row per x");
      for (std::size_t x = 0; x < nx; ++x)
        check_distribution(spec_.surrogate[t][x], ns, "surrogate." + std::to_string(t) + " row " + std::to_string(x));
    }
    if (spec_.long_surrogate.size() != nx) throw ValidationError("surrogate law: long_surrogate needs one row per x");
    for (std::size_t x = 0; x < nx; ++x)
      check_distribution(spec_.long_surrogate[x], ns, "long_surrogate row " + std::to_string(x));
    if (spec_.outcome_mean.size() != ns) throw ValidationError("surrogate law: outcome needs one row per s");
    for (const auto& row : spec_.outcome_mean)
      if (row.size() != nx) throw ValidationError("surrogate law: outcome rows need one entry per x");
    if (!(spec_.sigma_y >= 0.0)) throw ValidationError("surrogate law: sigma_y must be >= 0");
  }

  Spec spec_;
};

}  // namespace autodml
