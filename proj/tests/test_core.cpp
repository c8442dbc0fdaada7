#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <vector>

#include "autodml/core.hpp"
#include "autodml/dgp.hpp"
#include "autodml/features.hpp"
#include "autodml/functional.hpp"
#include "autodml/linear_fn.hpp"
#include "autodml/random.hpp"
#include "support/brute_force.hpp"

using namespace autodml;

namespace {

Trajectory make_trajectory(std::vector<double> states, std::vector<int> treatments, double y = 0.0) {
  Trajectory z;
  for (double s : states) z.states.push_back({s});
  z.treatments = std::move(treatments);
  z.outcome = y;
  return z;
}

LinearFn random_fn(const FeatureMapPtr& map, Rng& rng) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(map->size()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.uniform(-3.0, 3.0);
  return LinearFn(map, w);
}

}  // namespace

TEST(FeatureMap, TabularLayoutIsTreatmentBlockThenRowMajorCell) {
  const FeatureMap map = FeatureMap::tabular({2, 3}, 2);
  EXPECT_EQ(map.size(), 12u);
  const std::vector<double> s{1.0, 2.0};
  const Eigen::VectorXd v = map(s, 1);
  for (Eigen::Index i = 0; i < v.size(); ++i) EXPECT_EQ(v(i), i == 6 + 5 ? 1.0 : 0.0) << i;
}

TEST(FeatureMap, TabularRejectsOffGridStates) {
  const FeatureMap map = FeatureMap::tabular({2}, 2);
  const std::vector<double> bad{2.0}, frac{0.5};
  EXPECT_THROW(map(bad, 0), ValidationError);
  EXPECT_THROW(map(frac, 0), ValidationError);
  const std::vector<double> ok{1.0};
  EXPECT_THROW(map(ok, 2), ValidationError);
}

TEST(FeatureMap, PolynomialDegreeTwoInTwoDimensions) {
  const FeatureMap map = FeatureMap::polynomial(2, 2, 1);
  EXPECT_EQ(map.size(), 6u);
  const std::vector<double> s{2.0, 3.0};
  const Eigen::VectorXd v = map(s, 0);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) sum += v(i);
  // 1 + x + y + x^2 + xy + y^2
  EXPECT_DOUBLE_EQ(sum, 1 + 2 + 3 + 4 + 6 + 9);
}

TEST(FeatureMap, RandomFourierIsDeterministicGivenSeed) {
  const FeatureMap a = FeatureMap::random_fourier(2, 16, 0.7, 42, 2);
  const FeatureMap b = FeatureMap::random_fourier(2, 16, 0.7, 42, 2);
  const FeatureMap c = FeatureMap::random_fourier(2, 16, 0.7, 43, 2);
  const std::vector<double> s{0.3, -1.2};
  const Eigen::VectorXd va = a(s, 1), vb = b(s, 1), vc = c(s, 1);
  EXPECT_EQ(va, vb);
  EXPECT_NE(va, vc);
  EXPECT_EQ(a(s, 1), va);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
}

TEST(FeatureMap, DotMatchesExplicitFeatures) {
  Rng rng(7);
  for (const FeatureMap& map : {FeatureMap::tabular({3}, 2), FeatureMap::polynomial(1, 3, 2),
                                FeatureMap::random_fourier(1, 8, 1.0, 5, 2)}) {
    const auto shared = share(map);
    const LinearFn f = random_fn(shared, rng);
    for (int s = 0; s < 3; ++s)
      for (int k = 0; k < 2; ++k) {
        const std::vector<double> st{static_cast<double>(s)};
        EXPECT_NEAR(f(st, k), f.weights().dot(map(st, k)), 1e-12);
      }
  }
}

TEST(LinearFn, ClipBoundsEvaluations) {
  const auto map = share(FeatureMap::tabular({2}, 2));
  Eigen::VectorXd w(4);
  w << 10.0, -10.0, 0.5, 3.0;
  const LinearFn f(map, w, 2.0);
  const std::vector<double> s0{0.0}, s1{1.0};
  EXPECT_EQ(f(s0, 0), 2.0);
  EXPECT_EQ(f(s0, 1), 0.5);
  EXPECT_EQ(f(s1, 0), -2.0);
  EXPECT_THROW(LinearFn(map, w, 0.0), ValidationError);
  EXPECT_THROW(LinearFn(map, Eigen::VectorXd::Zero(3)), ValidationError);
}

TEST(Functional, FixedSequenceConstantFunction) {
  const auto f = TreatmentFunctional::fixed_sequence({1, 1});
  const LinearFn g(share(FeatureMap::polynomial(1, 0, 2)), Eigen::VectorXd::Constant(2, 7.0));
  EXPECT_EQ(evaluate_moment(f, 2, make_trajectory({0, 1}, {0, 0}), g), 7.0);
}

TEST(Functional, ContrastOfTreatmentCode) {
  // g(s, a) = a on a tabular grid
  const auto map = share(FeatureMap::tabular({2}, 2));
  Eigen::VectorXd w(4);
  w << 0.0, 0.0, 1.0, 1.0;
  const auto f = TreatmentFunctional::sequence_contrast({{1.0, {1}}, {-1.0, {0}}});
  EXPECT_EQ(evaluate_moment(f, 1, make_trajectory({1}, {0}), LinearFn(map, w)), 1.0);
}

TEST(Functional, FixedSequenceReadsTargetCell) {
  const auto map = share(FeatureMap::tabular({2}, 2));
  Eigen::VectorXd w(4);
  w << 0.0, 0.0, 2.0, 4.0;
  const auto f = TreatmentFunctional::fixed_sequence({1});
  EXPECT_EQ(evaluate_moment(f, 1, make_trajectory({1}, {0}), LinearFn(map, w)), 4.0);
}

TEST(Functional, RejectsOutOfRangeTargetsNamingPeriodAndTerm) {
  const auto f = TreatmentFunctional::fixed_sequence({0, 2});
  const LinearFn g = LinearFn::zero(share(FeatureMap::tabular({2}, 2)));
  try {
    evaluate_moment(f, 2, make_trajectory({0, 1}, {0, 0}), g);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("period 2, term 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(evaluate_moment(f, 3, make_trajectory({0, 1}, {0, 0}), g), ValidationError);
}

TEST(FunctionalProperty, MomentIsLinearInG) {
  Rng rng(11);
  const auto map = share(FeatureMap::tabular({3}, 2));
  std::vector<TreatmentFunctional> plans{
      TreatmentFunctional::fixed_sequence({1, 0}),
      TreatmentFunctional::sequence_contrast({{2.0, {1, 1}}, {-0.5, {0, 1}}, {1.5, {0, 0}}}),
      TreatmentFunctional::dynamic_policy({[](const Prefix& p) { return p.current_state()[0] > 0 ? 1 : 0; },
                                           [](const Prefix& p) { return p.treatment(1); }}),
      TreatmentFunctional::randomized_policy(
          {[](const Prefix&) { return std::vector<double>{0.3, 0.7}; },
           [](const Prefix& p) { return p.current_state()[0] == 2 ? std::vector<double>{1, 0} : std::vector<double>{0.5, 0.5}; }},
          {2, 2})};
  for (int draw = 0; draw < 200; ++draw) {
    const LinearFn g = random_fn(map, rng), h = random_fn(map, rng);
    const double alpha = rng.uniform(-2, 2), beta = rng.uniform(-2, 2);
    const LinearFn combo(map, alpha * g.weights() + beta * h.weights());
    const Trajectory z = make_trajectory({static_cast<double>(rng.below(3)), static_cast<double>(rng.below(3))},
                                         {static_cast<int>(rng.below(2)), static_cast<int>(rng.below(2))});
    for (const auto& f : plans)
      for (int t = 1; t <= 2; ++t)
        EXPECT_NEAR(evaluate_moment(f, t, z, combo), alpha * evaluate_moment(f, t, z, g) + beta * evaluate_moment(f, t, z, h),
                    1e-12);
  }
}

TEST(FunctionalProperty, FixedPolicyAndSingleArmContrastAgree) {
  Rng rng(3);
  const auto map = share(FeatureMap::tabular({3}, 2));
  const auto fixed = TreatmentFunctional::fixed_sequence({1, 0});
  const auto policy = TreatmentFunctional::dynamic_policy({[](const Prefix&) { return 1; }, [](const Prefix&) { return 0; }});
  const auto contrast = TreatmentFunctional::sequence_contrast({{1.0, {1, 0}}});
  for (int draw = 0; draw < 100; ++draw) {
    const LinearFn g = random_fn(map, rng);
    const Trajectory z = make_trajectory({static_cast<double>(rng.below(3)), static_cast<double>(rng.below(3))},
                                         {static_cast<int>(rng.below(2)), static_cast<int>(rng.below(2))});
    for (int t = 1; t <= 2; ++t) {
      const double v = evaluate_moment(fixed, t, z, g);
      EXPECT_EQ(evaluate_moment(policy, t, z, g), v);
      // the contrast only evaluates continuations of the observed prefix
      if (t == 1 || z.treatment(1) == 1) EXPECT_EQ(evaluate_moment(contrast, t, z, g), v);
    }
  }
}

TEST(PanelDataset, ValidationNamesTheProblem) {
  EXPECT_THROW(PanelDataset({}, {1}, {2}), ValidationError);
  EXPECT_THROW(PanelDataset({make_trajectory({0}, {2})}, {1}, {2}), ValidationError);
  EXPECT_THROW(PanelDataset({make_trajectory({0, 1}, {0, 1})}, {1}, {2}), ValidationError);
  EXPECT_THROW(PanelDataset({make_trajectory({0}, {0}, NAN)}, {1}, {2}), ValidationError);
  const PanelDataset d({make_trajectory({0}, {0}, 1.0), make_trajectory({1}, {1}, 2.0)}, {1}, {2});
  const std::vector<std::size_t> rows{1};
  EXPECT_EQ(d.subset(rows)[0].outcome, 2.0);
}

TEST(Simulate, ReferenceOneIsDeterministicOutcomeTable) {
  const DiscreteDGP dgp = reference_dgp_1();
  const PanelDataset d = dgp.simulate(1, 0);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].outcome, d[0].state(1)[0] + d[0].treatment(1));
}

TEST(Simulate, SameSeedIsBitIdentical) {
  const DiscreteDGP dgp = reference_dgp_2();
  const PanelDataset a = dgp.simulate(1000, 9), b = dgp.simulate(1000, 9), c = dgp.simulate(1000, 10);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].states, b[i].states);
    EXPECT_EQ(a[i].treatments, b[i].treatments);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a[i].outcome), std::bit_cast<std::uint64_t>(b[i].outcome));
    differs = differs || a[i].outcome != c[i].outcome;
  }
  EXPECT_TRUE(differs);
}

TEST(Simulate, PropensityFrequencyWithinBinomialBand) {
  const DiscreteDGP dgp = reference_dgp_1();
  const PanelDataset d = dgp.simulate(100000, 1);
  double treated = 0.0, count = 0.0;
  for (const auto& z : d.trajectories())
    if (z.state(1)[0] == 1.0) {
      count += 1.0;
      treated += z.treatment(1);
    }
  EXPECT_NEAR(treated / count, 0.25, 3.0 * std::sqrt(0.25 * 0.75 / 50000.0));
}

TEST(DiscreteDGP, BadTableRowIsNamed) {
  DiscreteDGP::Spec s = reference_dgp_1().spec();
  s.propensity[0][1] = {0.5, 0.6};
  try {
    DiscreteDGP d(s);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("propensity.1 row 2"), std::string::npos) << e.what();
  }
}

TEST(Rng, MixSeedSeparatesStreams) {
  EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
  EXPECT_NE(mix_seed(1, 0), mix_seed(2, 0));
  EXPECT_EQ(mix_seed(5, 3), mix_seed(5, 3));
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.below(7), 7u);
  }
}

TEST(RandomDgp, GeneratorStaysInsideItsEnvelope) {
  Rng rng(99);
  for (int i = 0; i < 50; ++i) {
    const DiscreteDGP dgp = testing_support::random_dgp(rng);
    EXPECT_LE(dgp.periods(), 3);
    for (int t = 1; t <= dgp.periods(); ++t) {
      EXPECT_LE(dgp.state_arity(t), 4);
      EXPECT_EQ(dgp.treatment_arity(t), 2);
    }
    EXPECT_GT(dgp.positivity_bound(), 0.0);
  }
}
