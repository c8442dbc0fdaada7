#include <gtest/gtest.h>

#include <cmath>

#include "autodml/dgp.hpp"
#include "autodml/inference.hpp"
#include "autodml/surrogate.hpp"
#include "support/brute_force.hpp"

using namespace autodml;
namespace ts = testing_support;

namespace {

LinearFn random_on(const FeatureMapPtr& map, Rng& rng, double bound = 1.0) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(map->size()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.uniform(-bound, bound);
  return LinearFn(map, w);
}

SurrogateNuisances perturb(const SurrogateNuisances& base, const SurrogateLaw& law, Rng& rng, bool regressions,
                           bool representers) {
  SurrogateNuisances out = base;
  if (regressions) {
    out.h = base.h.perturbed(random_on(law.surrogate_map(), rng), 1.0);
    out.g = base.g.perturbed(random_on(law.treatment_map(), rng), 1.0);
  }
  if (representers) {
    out.a1 = base.a1.perturbed(random_on(law.treatment_map(), rng), 1.0);
    out.a2 = base.a2.perturbed(random_on(law.surrogate_map(), rng), 1.0);
  }
  return out;
}

SurrogateConfig law_config(const SurrogateLaw& law, std::optional<double> lambda = std::nullopt) {
  SurrogateConfig cfg;
  cfg.treatment_features = law.treatment_map();
  cfg.surrogate_features = law.surrogate_map();
  cfg.lambda_h = cfg.lambda_g = cfg.lambda_a1 = cfg.lambda_a2 = lambda;
  return cfg;
}

}  // namespace

TEST(SurrogateOracle, TreatmentRepresenterIsSignedInversePropensity) {
  const SurrogateLaw law = ts::reference_surrogate_law();
  const auto nu = law.oracle_nuisances();
  for (int x = 0; x < 2; ++x) {
    const double p = law.spec().propensity[x];
    const std::vector<double> xv{static_cast<double>(x)};
    EXPECT_NEAR(nu.a1(xv, 1), 1.0 / p, 1e-14);
    EXPECT_NEAR(nu.a1(xv, 0), -1.0 / (1.0 - p), 1e-14);
  }
  EXPECT_NEAR(law.ate(), ts::surrogate_ate(law), 1e-14);
  EXPECT_NEAR(law.population_moment(nu), law.ate(), 1e-14);
}

TEST(SurrogateOracle, MatchedLawSurrogateScoreIsConditionalMean) {
  // D_s = D_l on (S, X): a2(s, x) = E_s[a1(T, X) | S = s, X = x]
  const SurrogateLaw law = ts::reference_surrogate_law(true);
  const auto nu = law.oracle_nuisances();
  const auto& sp = law.spec();
  for (int x = 0; x < 2; ++x)
    for (int s = 0; s < 3; ++s) {
      double num = 0.0, den = 0.0;
      for (int t = 0; t < 2; ++t) {
        const double pt = t ? sp.propensity[x] : 1.0 - sp.propensity[x];
        const double w = pt * sp.surrogate[t][x][s];
        num += w * (t ? 1.0 / sp.propensity[x] : -1.0 / (1.0 - sp.propensity[x]));
        den += w;
      }
      const std::vector<double> sv{static_cast<double>(s)}, xv{static_cast<double>(x)};
      EXPECT_NEAR(nu.a2_at(sv, xv), num / den, 1e-12);
    }
}

TEST(SurrogateFit, RandomizedTreatmentWithoutCovariates) {
  SurrogateLaw::Spec s;
  s.x_arity = 1;
  s.s_arity = 2;
  s.short_x = {1.0};
  s.propensity = {0.5};
  s.surrogate = {{{0.6, 0.4}}, {{0.3, 0.7}}};
  s.outcome_mean = {{1.0}, {2.0}};
  s.sigma_y = 0.5;
  const SurrogateLaw law(SurrogateLaw::matched(s));
  const auto oracle = law.oracle_nuisances();
  const std::vector<double> x0{0.0};
  EXPECT_NEAR(oracle.a1(x0, 1), 2.0, 1e-14);
  EXPECT_NEAR(oracle.a1(x0, 0), -2.0, 1e-14);
  const auto fit = surrogate_fit(law.simulate(100000, 100000, 3), law_config(law, 1e-8));
  EXPECT_NEAR(fit.a1(x0, 1), 2.0, 0.05);
  EXPECT_NEAR(fit.a1(x0, 0), -2.0, 0.05);
}

TEST(SurrogateFit, LargeSampleApproachesOracle) {
  const SurrogateLaw law = ts::reference_surrogate_law();
  const auto fit = surrogate_fit(law.simulate(200000, 200000, 5), law_config(law, 1e-8));
  const auto truth = law.oracle_nuisances();
  EXPECT_LT(law.long_l2_squared(fit.a2, truth.a2), 0.01);
  EXPECT_LT(law.long_l2_squared(fit.h, truth.h), 0.001);
}

TEST(SurrogateRisk, QuadraticIdentity) {
  for (bool matched : {false, true}) {
    const SurrogateLaw law = ts::reference_surrogate_law(matched);
    const auto truth = law.oracle_nuisances();
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
      const LinearFn a = random_on(law.surrogate_map(), rng, 4.0);
      EXPECT_NEAR(law.risk(a) - law.risk(truth.a2), law.long_l2_squared(a, truth.a2), 1e-10);
    }
  }
}

TEST(SurrogateMixedBias, DirectEqualsFormula) {
  const SurrogateLaw law = ts::reference_surrogate_law();
  const auto truth = law.oracle_nuisances();
  const double theta = law.population_moment(truth);
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto alt = perturb(truth, law, rng, true, true);
    EXPECT_NEAR(law.population_moment(alt) - theta, law.mixed_bias_formula(alt, truth), 1e-10);
  }
}

TEST(SurrogateMixedBias, OneSidedCorruptionLeavesNoBias) {
  const SurrogateLaw law = ts::reference_surrogate_law();
  const auto truth = law.oracle_nuisances();
  const double theta = law.population_moment(truth);
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    EXPECT_NEAR(law.population_moment(perturb(truth, law, rng, true, false)), theta, 1e-12);
    EXPECT_NEAR(law.population_moment(perturb(truth, law, rng, false, true)), theta, 1e-12);
  }
}

TEST(SurrogateEstimate, CoversAteAtModerateSize) {
  const SurrogateLaw law = ts::reference_surrogate_law();
  const auto r = surrogate_estimate(law.simulate(4000, 4000, 7), law_config(law), 5, 11);
  const double se = r.estimate.sigma_hat / std::sqrt(4000.0);
  EXPECT_NEAR(r.estimate.theta_hat, law.ate(), 4.0 * se);
  EXPECT_EQ(r.n_short, 4000u);
  EXPECT_EQ(r.estimate.n, 4000u);
  EXPECT_NEAR(r.estimate.sigma_hat * r.estimate.sigma_hat, r.variance_short + r.variance_long, 1e-12);
}

TEST(SurrogateEstimate, DeterministicAcrossJobs) {
  const SurrogateLaw law = ts::reference_surrogate_law();
  const auto data = law.simulate(1000, 1500, 8);
  const auto a = surrogate_estimate(data, law_config(law), 5, 3, 1);
  const auto b = surrogate_estimate(data, law_config(law), 5, 3, 3);
  EXPECT_EQ(a.estimate.theta_hat, b.estimate.theta_hat);
  EXPECT_EQ(a.estimate.sigma_hat, b.estimate.sigma_hat);
  EXPECT_EQ(a.long_scores, b.long_scores);
}

TEST(SurrogateEstimate, ReducesToOnePeriodAipwWhenSurrogateIsOutcome) {
  // S = Y in both samples, same units: h is the identity and the long score vanishes
  Rng rng(9);
  DiscreteDGP::Spec s;
  s.periods = 1;
  s.state_arity = {3};
  s.treatment_arity = {2};
  s.initial = {0.3, 0.3, 0.4};
  s.propensity = {{{0.5, 0.5}, {0.7, 0.3}, {0.35, 0.65}}};
  s.outcome_mean = {{0.0, 1.0}, {1.5, 1.0}, {-0.5, 2.0}};
  s.sigma_y = 1.0;
  const DiscreteDGP dgp(s);
  const PanelDataset panel = dgp.simulate(3000, 10);
  std::vector<ShortRecord> sh;
  std::vector<LongRecord> lg;
  for (const auto& z : panel.trajectories()) {
    const std::vector<double> x{z.state(1)[0]};
    sh.push_back({x, z.treatment(1), {z.outcome}});
    lg.push_back({x, {z.outcome}, z.outcome});
  }
  const SurrogatePair pair(sh, lg);
  const double lambda = 1e-6;
  SurrogateConfig scfg;
  scfg.treatment_features = share(FeatureMap::tabular({3}, 2));
  scfg.surrogate_features = share(FeatureMap::polynomial(2, 1, 1));
  scfg.lambda_h = 0.0;
  scfg.lambda_g = scfg.lambda_a1 = scfg.lambda_a2 = lambda;
  const auto sr = surrogate_estimate(pair, scfg, 5, 21);

  const FitConfig fcfg = FitConfig::with_features({share(FeatureMap::tabular({3}, 2))}, lambda);
  const auto plan = TreatmentFunctional::sequence_contrast({{1.0, {1}}, {-1.0, {0}}});
  const auto dr = dml_estimate(panel, plan, fcfg, 5, 21);
  EXPECT_NEAR(sr.estimate.theta_hat, dr.theta_hat, 1e-8);
}

TEST(SurrogatePair, Validation) {
  EXPECT_THROW(SurrogatePair({}, {{{0.0}, {0.0}, 1.0}}), ValidationError);
  EXPECT_THROW(SurrogatePair({{{0.0}, 2, {0.0}}}, {{{0.0}, {0.0}, 1.0}}), ValidationError);
  EXPECT_THROW(SurrogatePair({{{0.0}, 1, {0.0}}}, {{{0.0, 1.0}, {0.0}, 1.0}}), ValidationError);
}

TEST(SurrogateFit, ComponentErrorsAreNamed) {
  const SurrogateLaw law = ts::reference_surrogate_law();
  const auto data = law.simulate(3, 3, 1);
  try {
    surrogate_fit(data, law_config(law, 0.0));
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("surrogate component"), std::string::npos) << e.what();
  }
}
