#include <gtest/gtest.h>

#include <cmath>

#include "autodml/diagnostics.hpp"
#include "autodml/dgp.hpp"
#include "autodml/moment.hpp"
#include "autodml/oracle.hpp"
#include "support/brute_force.hpp"

using namespace autodml;
namespace ts = testing_support;

TEST(OrthogonalMoment, OnePeriodIsAipw) {
  const DiscreteDGP dgp = reference_dgp_1();
  const auto f = TreatmentFunctional::fixed_sequence({1});
  Rng rng(1);
  const NuisanceSet nu({random_grid_fn(dgp, 1, rng, 3)}, {random_grid_fn(dgp, 1, rng, 3)});
  const PanelDataset sample = dgp.simulate(50, 2);
  for (const auto& z : sample.trajectories()) {
    const auto s = z.state(1);
    const double expected = nu.regression(1)(s, 1) + nu.representer(1)(s, z.treatment(1)) *
                                                         (z.outcome - nu.regression(1)(s, z.treatment(1)));
    EXPECT_NEAR(orthogonal_moment(z, f, nu).value, expected, 1e-14);
  }
}

TEST(OrthogonalMoment, DecompositionIsExactInFixedOrder) {
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const DiscreteDGP dgp = ts::random_dgp(rng);
    const auto f = TreatmentFunctional::fixed_sequence(ts::random_sequence(rng, dgp.periods()));
    std::vector<LinearFn> fs, as;
    for (int t = 1; t <= dgp.periods(); ++t) {
      fs.push_back(random_grid_fn(dgp, t, rng, 2));
      as.push_back(random_grid_fn(dgp, t, rng, 2));
    }
    const NuisanceSet nu(fs, as);
    const PanelDataset sample = dgp.simulate(20, static_cast<std::uint64_t>(i));
    for (const auto& z : sample.trajectories()) {
      const MomentValue v = orthogonal_moment(z, f, nu);
      double acc = v.plug_in;
      for (double c : v.corrections) acc += c;
      EXPECT_EQ(acc, v.value);
    }
  }
}

TEST(OrthogonalMoment, ZeroRepresenterIsPlugIn) {
  const DiscreteDGP dgp = reference_dgp_2();
  const auto f = TreatmentFunctional::fixed_sequence({1, 1});
  Rng rng(3);
  const NuisanceSet nu({random_grid_fn(dgp, 1, rng), random_grid_fn(dgp, 2, rng)},
                       {LinearFn::zero(grid_feature_map(dgp, 1)), LinearFn::zero(grid_feature_map(dgp, 2))});
  const PanelDataset sample = dgp.simulate(30, 4);
  for (const auto& z : sample.trajectories()) {
    const MomentValue v = orthogonal_moment(z, f, nu);
    EXPECT_EQ(v.value, v.plug_in);
  }
}

TEST(OrthogonalMoment, SampleMeanWithOracleNuisancesNearTheta) {
  const DiscreteDGP dgp = reference_dgp_2();
  const auto f = TreatmentFunctional::fixed_sequence({1, 1});
  const auto truth = oracle_nuisances(dgp, f);
  const PanelDataset data = dgp.simulate(100000, 11);
  double sum = 0.0, sq = 0.0;
  for (const auto& z : data.trajectories()) {
    const double v = orthogonal_moment(z, f, truth).value;
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(data.size()), mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(mean, 3.8, 4.0 * sd / std::sqrt(n));
}

TEST(OrthogonalMoment, PeriodMismatchIsRejected) {
  const DiscreteDGP dgp = reference_dgp_2();
  const auto truth = oracle_nuisances(dgp, TreatmentFunctional::fixed_sequence({1, 1}));
  const Trajectory z = dgp.simulate(1, 0)[0];
  EXPECT_THROW(orthogonal_moment(z, TreatmentFunctional::fixed_sequence({1}), truth), ValidationError);
}

TEST(MixedBias, ZeroAtTruthAndUnderOneSidedCorruption) {
  const DiscreteDGP dgp = reference_dgp_2();
  const auto f = TreatmentFunctional::fixed_sequence({1, 1});
  const auto truth = oracle_nuisances(dgp, f);
  const MixedBias same = mixed_bias(dgp, f, truth, truth);
  EXPECT_EQ(same.direct, 0.0);
  EXPECT_EQ(same.formula, 0.0);
  Rng rng(5);
  const auto alt = truth.with_representer(1, random_grid_fn(dgp, 1, rng, 4)).with_representer(2, random_grid_fn(dgp, 2, rng, 4));
  const MixedBias mb = mixed_bias(dgp, f, alt, truth);
  EXPECT_NEAR(mb.direct, 0.0, 1e-12);
  EXPECT_EQ(mb.formula, 0.0);
}

TEST(MixedBias, ShiftedFirstPeriodMatchesClosedForm) {
  // f_1 += c, a_1 += g: bias = -c E[g] (a_0 stays 1 so no other term survives)
  const DiscreteDGP dgp = reference_dgp_2();
  const auto f = TreatmentFunctional::fixed_sequence({1, 1});
  const auto truth = oracle_nuisances(dgp, f);
  Rng rng(6);
  const auto map = grid_feature_map(dgp, 1);
  const double c = 0.7;
  const LinearFn g = random_grid_fn(dgp, 1, rng, 2);
  const auto alt = truth.with_regression(1, truth.regression(1).perturbed(LinearFn(map, Eigen::VectorXd::Constant(4, 1.0)), c))
                       .with_representer(1, truth.representer(1).perturbed(g, 1.0));
  const MixedBias mb = mixed_bias(dgp, f, alt, truth);
  const double eg = population_expectation(dgp, [&](const WeightedPath& p) { return g(p.z.state(1), p.z.treatment(1)); });
  EXPECT_NEAR(mb.direct, mb.formula, 1e-10);
  EXPECT_NEAR(mb.direct, -c * eg, 1e-10);
}

TEST(MixedBiasProperty, DirectEqualsFormulaOnRandomDgps) {
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    const DiscreteDGP dgp = ts::random_dgp(rng);
    const auto f = ts::random_contrast(rng, dgp.periods());
    const auto truth = oracle_nuisances(dgp, f);
    for (int draw = 0; draw < 10; ++draw) {
      NuisanceSet alt = truth;
      for (int t = 1; t <= dgp.periods(); ++t)
        alt = alt.with_regression(t, truth.regression(t).perturbed(random_grid_fn(dgp, t, rng), 1.0))
                  .with_representer(t, truth.representer(t).perturbed(random_grid_fn(dgp, t, rng), 1.0));
      const MixedBias mb = mixed_bias(dgp, f, alt, truth);
      EXPECT_NEAR(mb.direct, mb.formula, 1e-10);
    }
  }
}

TEST(OrthogonalitySlope, SingleNuisanceDirectionsAreFlat) {
  const DiscreteDGP dgp = reference_dgp_2();
  const auto f = TreatmentFunctional::fixed_sequence({1, 1});
  Rng rng(8);
  for (int t = 1; t <= 2; ++t)
    for (int which = 0; which < 2; ++which) {
      Perturbation p = Perturbation::none(2);
      (which == 0 ? p.regression : p.representer)[static_cast<std::size_t>(t - 1)] = random_grid_fn(dgp, t, rng);
      const SlopeResult r = orthogonality_slope(dgp, f, p, {1e-1, 1e-2, 1e-3});
      EXPECT_GE(r.slope, 1.9);
    }
}

TEST(OrthogonalitySlope, JointSamePeriodBiasIsExactlySecondOrder) {
  Rng rng(9);
  for (int i = 0; i < 10; ++i) {
    const DiscreteDGP dgp = ts::random_dgp(rng);
    const auto f = TreatmentFunctional::fixed_sequence(ts::random_sequence(rng, dgp.periods()));
    const auto truth = oracle_nuisances(dgp, f);
    const double theta = oracle_theta(dgp, f);
    for (int t = 1; t <= dgp.periods(); ++t) {
      Perturbation p = Perturbation::none(dgp.periods());
      const LinearFn h = random_grid_fn(dgp, t, rng), g = random_grid_fn(dgp, t, rng);
      p.regression[static_cast<std::size_t>(t - 1)] = h;
      p.representer[static_cast<std::size_t>(t - 1)] = g;
      const double egh = population_expectation(dgp, [&](const WeightedPath& w) {
        return g(w.z.state(t), w.z.treatment(t)) * h(w.z.state(t), w.z.treatment(t));
      });
      for (double e : {1e-1, 1e-2, 1e-3})
        EXPECT_NEAR(population_moment(dgp, f, apply(truth, p, e)) - theta, -e * e * egh, 1e-10);
      const SlopeResult r = orthogonality_slope(dgp, f, truth, p, {1e-1, 1e-2, 1e-3});
      if (!r.identically_zero) EXPECT_NEAR(r.slope, 2.0, 1e-3);
    }
  }
}

TEST(OrthogonalitySlope, CrossPeriodPairsAreFlat) {
  Rng rng(10);
  DiscreteDGP::Spec s = reference_dgp_2().spec();
  // three periods so that a_1 with f_3 is a non-adjacent pair
  s.periods = 3;
  s.state_arity = {2, 2, 2};
  s.treatment_arity = {2, 2, 2};
  s.propensity.push_back({{0.3, 0.7}, {0.6, 0.4}});
  s.transition.push_back({{0.5, 0.5}, {0.2, 0.8}, {0.9, 0.1}, {0.4, 0.6}});
  const DiscreteDGP dgp(s);
  const auto f = TreatmentFunctional::fixed_sequence({1, 0, 1});
  const auto truth = oracle_nuisances(dgp, f);
  const double theta = oracle_theta(dgp, f);
  for (int draw = 0; draw < 20; ++draw)
    for (int t = 1; t <= 3; ++t)
      for (int t2 = 1; t2 <= 3; ++t2) {
        if (t2 == t || t2 == t + 1) continue;
        Perturbation p = Perturbation::none(3);
        p.representer[static_cast<std::size_t>(t - 1)] = random_grid_fn(dgp, t, rng);
        p.regression[static_cast<std::size_t>(t2 - 1)] = random_grid_fn(dgp, t2, rng);
        EXPECT_LT(std::abs(population_moment(dgp, f, apply(truth, p, 1e-2)) - theta), 1e-12);
      }
}

TEST(OrthogonalitySlope, GridValidation) {
  const DiscreteDGP dgp = reference_dgp_1();
  const auto f = TreatmentFunctional::fixed_sequence({1});
  const Perturbation p = Perturbation::none(1);
  EXPECT_THROW(orthogonality_slope(dgp, f, p, {1e-1, 1e-2}), ValidationError);
  EXPECT_THROW(orthogonality_slope(dgp, f, p, {1e-1, 5e-2, 2e-2}), ValidationError);
  EXPECT_THROW(orthogonality_slope(dgp, f, p, {1e-1, 0.0, 1e-3}), ValidationError);
}

TEST(Diagnostics, AllChecksPassOnReferenceDgps) {
  for (const auto& [dgp, plan] : {std::pair{reference_dgp_1(), TreatmentFunctional::fixed_sequence({1})},
                                  std::pair{reference_dgp_2(), TreatmentFunctional::fixed_sequence({1, 1})},
                                  std::pair{reference_dgp_2(), TreatmentFunctional::sequence_contrast({{1, {1, 1}}, {-1, {0, 0}}})}}) {
    for (const auto& c : run_diagnostics(dgp, plan)) EXPECT_TRUE(c.passed) << c.name << " = " << c.value;
  }
}
