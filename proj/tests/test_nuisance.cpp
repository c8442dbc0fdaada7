#include <gtest/gtest.h>

#include <cmath>

#include "autodml/dgp.hpp"
#include "autodml/moment.hpp"
#include "autodml/nuisance.hpp"
#include "autodml/oracle.hpp"
#include "autodml/ridge.hpp"
#include "support/brute_force.hpp"

using namespace autodml;
namespace ts = testing_support;

namespace {

FitConfig grid_config(const DiscreteDGP& dgp, std::optional<double> lambda) {
  std::vector<FeatureMapPtr> maps;
  for (int t = 1; t <= dgp.periods(); ++t) maps.push_back(grid_feature_map(dgp, t));
  return FitConfig::with_features(maps, lambda);
}

double evaluate_at(const LinearFn& f, int s, int k) {
  const std::vector<double> st{static_cast<double>(s)};
  return f(st, k);
}

}  // namespace

TEST(Ridge, IdentityDesignInterpolates) {
  const Eigen::VectorXd beta = fit_ridge(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(3, 5), 0.0);
  EXPECT_NEAR(beta(0), 3.0, 1e-15);
  EXPECT_NEAR(beta(1), 5.0, 1e-15);
}

TEST(Ridge, ZeroTargetGivesZero) {
  Rng rng(1);
  Eigen::MatrixXd x(20, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  EXPECT_EQ(fit_ridge(x, Eigen::VectorXd::Zero(20), 0.3).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Ridge, InterceptIsSampleMean) {
  const Eigen::VectorXd beta = fit_ridge(Eigen::MatrixXd::Ones(4, 1), Eigen::Vector4d(1, 2, 3, 4), 0.0);
  EXPECT_NEAR(beta(0), 2.5, 1e-15);
}

TEST(Ridge, SingularSystemNamesRankDeficiency) {
  Eigen::MatrixXd x(3, 2);
  x << 1, 2, 2, 4, 3, 6;
  try {
    fit_ridge(x, Eigen::Vector3d(1, 2, 3), 0.0);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("rank 1 < 2"), std::string::npos) << e.what();
  }
  EXPECT_NO_THROW(fit_ridge(x, Eigen::Vector3d(1, 2, 3), 1e-3));
  EXPECT_THROW(fit_ridge(x, Eigen::Vector3d(1, 2, 3), -1.0), ValidationError);
}

TEST(Ridge, UnpenalizedColumnIsLeftAlone) {
  // one column, mask off: ordinary least squares regardless of lambda
  const Eigen::MatrixXd g = Eigen::MatrixXd::Constant(1, 1, 2.0);
  const Eigen::VectorXd r = Eigen::VectorXd::Constant(1, 3.0);
  EXPECT_DOUBLE_EQ(solve_penalized(g, r, 100.0, {false})(0), 1.5);
  EXPECT_DOUBLE_EQ(solve_penalized(g, r, 1.0, {true})(0), 1.0);
}

TEST(NestedRegressions, ReferenceOneRecoversOracleTable) {
  const DiscreteDGP dgp = reference_dgp_1();
  const PanelDataset data = dgp.simulate(100000, 3);
  const auto f = fit_nested_regressions(data, TreatmentFunctional::fixed_sequence({1}), grid_config(dgp, 1e-8));
  for (int s = 0; s < 2; ++s)
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(evaluate_at(f[0], s, k), s + k, 0.05);
}

TEST(NestedRegressions, ConstantOutcomeIsFitExactly) {
  Rng rng(12);
  for (int i = 0; i < 10; ++i) {
    DiscreteDGP::Spec s = ts::random_dgp(rng).spec();
    for (auto& row : s.outcome_mean) row = {-1.25, -1.25};
    s.sigma_y = 0.0;
    const DiscreteDGP dgp(s);
    const PanelDataset data = dgp.simulate(2000, static_cast<std::uint64_t>(i));
    // polynomial degree 0: a single column per treatment level, never empty
    std::vector<FeatureMapPtr> maps;
    for (int t = 1; t <= dgp.periods(); ++t) maps.push_back(share(FeatureMap::polynomial(1, 0, 2)));
    const auto f = fit_nested_regressions(
        data, TreatmentFunctional::fixed_sequence(ts::random_sequence(rng, dgp.periods())), FitConfig::with_features(maps, 0.0));
    for (const auto& fn : f)
      for (int s0 = 0; s0 < 2; ++s0)
        for (int k = 0; k < 2; ++k) EXPECT_NEAR(evaluate_at(fn, s0, k), -1.25, 1e-12);
  }
}

TEST(NestedRegressions, DeterministicTransitionComposes) {
  DiscreteDGP::Spec s;
  s.periods = 2;
  s.state_arity = {2, 2};
  s.treatment_arity = {2, 2};
  s.initial = {0.4, 0.6};
  s.propensity = {{{0.5, 0.5}, {0.3, 0.7}}, {{0.6, 0.4}, {0.5, 0.5}}};
  // S_2 = S_1 xor T_1
  s.transition = {{{1, 0}, {0, 1}, {0, 1}, {1, 0}}};
  s.outcome_mean = {{1.0, 2.0}, {0.5, -1.0}};
  s.sigma_y = 1.0;
  const DiscreteDGP dgp(s);
  const PanelDataset data = dgp.simulate(5000, 8);
  const auto f = fit_nested_regressions(data, TreatmentFunctional::fixed_sequence({0, 1}), grid_config(dgp, 1e-12));
  for (int s1 = 0; s1 < 2; ++s1)
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(evaluate_at(f[0], s1, k), evaluate_at(f[1], s1 ^ k, 1), 1e-9);
}

TEST(NestedRegressions, SolverFailureNamesPeriod) {
  const DiscreteDGP dgp = reference_dgp_2();
  // two rows cannot identify four cells without a penalty
  const PanelDataset data = dgp.simulate(2, 1);
  try {
    fit_nested_regressions(data, TreatmentFunctional::fixed_sequence({1, 1}), grid_config(dgp, 0.0));
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("period 2"), std::string::npos) << e.what();
  }
}

TEST(RieszLoss, ZeroCandidateIsZero) {
  const DiscreteDGP dgp = reference_dgp_1();
  const PanelDataset data = dgp.simulate(100, 1);
  const auto map = grid_feature_map(dgp, 1);
  EXPECT_EQ(riesz_loss(LinearFn::zero(map), data, TreatmentFunctional::fixed_sequence({1}), 1, LinearFn::constant(1.0)), 0.0);
}

TEST(RieszLoss, EmpiricalLossAtTruthNearMinusThree) {
  const DiscreteDGP dgp = reference_dgp_1();
  const auto f = TreatmentFunctional::fixed_sequence({1});
  const PanelDataset data = dgp.simulate(200000, 5);
  const auto truth = oracle_nuisances(dgp, f);
  // the loss per draw is bounded by 16 + 8, so 0.1 is many standard errors
  EXPECT_NEAR(riesz_loss(truth.representer(1), data, f, 1, LinearFn::constant(1.0)), -3.0, 0.1);
}

TEST(RecursiveRiesz, ReferenceOneRecoversInversePropensities) {
  const DiscreteDGP dgp = reference_dgp_1();
  const auto a = fit_recursive_riesz(dgp.simulate(100000, 4), TreatmentFunctional::fixed_sequence({1}), grid_config(dgp, 1e-8));
  EXPECT_NEAR(evaluate_at(a[0], 0, 1), 2.0, 0.15);
  EXPECT_NEAR(evaluate_at(a[0], 1, 1), 4.0, 0.15);
  EXPECT_NEAR(evaluate_at(a[0], 0, 0), 0.0, 0.15);
  EXPECT_NEAR(evaluate_at(a[0], 1, 0), 0.0, 0.15);
}

TEST(RecursiveRiesz, UniformPropensityTendsToTwo) {
  DiscreteDGP::Spec s = reference_dgp_1().spec();
  s.propensity = {{{0.5, 0.5}, {0.5, 0.5}}};
  const DiscreteDGP dgp(s);
  const auto a = fit_recursive_riesz(dgp.simulate(100000, 2), TreatmentFunctional::fixed_sequence({1}), grid_config(dgp, 1e-8));
  EXPECT_NEAR(evaluate_at(a[0], 0, 1), 2.0, 0.05);
  EXPECT_NEAR(evaluate_at(a[0], 1, 1), 2.0, 0.05);
}

TEST(RecursiveRiesz, NormalEquationsHold) {
  Rng rng(40);
  for (int i = 0; i < 10; ++i) {
    const DiscreteDGP dgp = ts::random_dgp(rng);
    const auto f = TreatmentFunctional::fixed_sequence(ts::random_sequence(rng, dgp.periods()));
    const PanelDataset data = dgp.simulate(3000, static_cast<std::uint64_t>(i));
    const FitConfig cfg = grid_config(dgp, 1e-3);
    const auto a = fit_recursive_riesz(data, f, cfg);
    for (int t = 1; t <= dgp.periods(); ++t) {
      const RieszSystem sys = riesz_system(data, f, cfg, t, t == 1 ? nullptr : &a[static_cast<std::size_t>(t - 2)]);
      const Eigen::VectorXd r = (sys.gram + sys.lambda * Eigen::MatrixXd::Identity(sys.gram.rows(), sys.gram.cols())) *
                                    a[static_cast<std::size_t>(t - 1)].weights() -
                                sys.rhs;
      EXPECT_LT(r.cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(RecursiveRiesz, ClipIsAppliedToEveryStage) {
  const DiscreteDGP dgp = reference_dgp_2();
  FitConfig cfg = grid_config(dgp, 1e-6);
  cfg.clip = 1.5;
  const auto a = fit_recursive_riesz(dgp.simulate(4000, 1), TreatmentFunctional::fixed_sequence({1, 1}), cfg);
  for (const auto& fn : a)
    for (int s = 0; s < 2; ++s)
      for (int k = 0; k < 2; ++k) EXPECT_LE(std::abs(evaluate_at(fn, s, k)), 1.5);
}

TEST(RecursiveRiesz, ErrorPropagationIsProportional) {
  // corrupt the stage-1 input by delta * g and watch a_2 move
  const DiscreteDGP dgp = reference_dgp_2();
  const auto f = TreatmentFunctional::fixed_sequence({1, 1});
  const PanelDataset data = dgp.simulate(20000, 6);
  const FitConfig cfg = grid_config(dgp, 1e-8);
  const auto truth = oracle_nuisances(dgp, f);
  Rng rng(2);
  Eigen::VectorXd gw(4);
  for (Eigen::Index i = 0; i < 4; ++i) gw(i) = rng.uniform(-1, 1);
  const LinearFn g(grid_feature_map(dgp, 1), gw);
  auto fit_a2 = [&](double delta) {
    const LinearFn prev = truth.representer(1).perturbed(g, delta);
    const RieszSystem sys = riesz_system(data, f, cfg, 2, &prev);
    return LinearFn(cfg.feature_map(2), solve_penalized(sys.gram, sys.rhs, sys.lambda));
  };
  const LinearFn base = fit_a2(0.0);
  std::vector<double> ratios;
  for (double delta : {0.05, 0.1, 0.2, 0.4}) {
    const double moved = population_l2_distance(dgp, 2, fit_a2(delta), base);
    const double input = population_l2_distance(dgp, 1, truth.representer(1).perturbed(g, delta), truth.representer(1));
    ratios.push_back(moved / input);
  }
  const double c = *std::max_element(ratios.begin(), ratios.end());
  std::cout << "stage-2 error per unit stage-1 error: c = " << c << "\n";
  EXPECT_TRUE(std::isfinite(c));
  EXPECT_GT(c, 0.0);
  // linear in delta: the ratio does not drift
  EXPECT_NEAR(*std::min_element(ratios.begin(), ratios.end()), c, 1e-6 * c);
}

TEST(CleverCovariate, FirstOrderConditionAndPlugInEquality) {
  Rng rng(50);
  for (int i = 0; i < 10; ++i) {
    const DiscreteDGP dgp = ts::random_dgp(rng);
    const auto f = TreatmentFunctional::fixed_sequence(ts::random_sequence(rng, dgp.periods()));
    const PanelDataset data = dgp.simulate(3000, static_cast<std::uint64_t>(i));
    const NuisanceSet nu = fit_nuisances(data, f, grid_config(dgp, 1e-2), true);
    std::vector<double> corr(static_cast<std::size_t>(dgp.periods()), 0.0);
    double plug = 0.0, full = 0.0;
    for (const auto& z : data.trajectories()) {
      const MomentValue v = orthogonal_moment(z, f, nu);
      for (std::size_t t = 0; t < corr.size(); ++t) corr[t] += v.corrections[t];
      plug += v.plug_in;
      full += v.value;
    }
    const double n = static_cast<double>(data.size());
    for (double c : corr) EXPECT_LE(std::abs(c / n), 1e-8);
    EXPECT_NEAR(plug / n, full / n, 1e-8);
  }
}

TEST(CleverCovariate, ZeroRepresenterReproducesPlainRegressions) {
  const DiscreteDGP dgp = reference_dgp_2();
  const auto f = TreatmentFunctional::fixed_sequence({1, 1});
  const PanelDataset data = dgp.simulate(1000, 3);
  const FitConfig cfg = grid_config(dgp, 1e-4);
  std::vector<LinearFn> zeros{LinearFn::zero(cfg.feature_map(1)), LinearFn::zero(cfg.feature_map(2))};
  const auto plain = fit_nested_regressions(data, f, cfg);
  const auto clever = fit_clever_covariate(data, f, zeros, cfg);
  for (std::size_t t = 0; t < 2; ++t) EXPECT_EQ(plain[t].weights(), clever[t].weights());
}

TEST(FitConfig, ValidatesAgainstData) {
  const DiscreteDGP dgp = reference_dgp_2();
  const PanelDataset data = dgp.simulate(50, 1);
  FitConfig cfg = grid_config(dgp, 1e-3);
  cfg.features.pop_back();
  EXPECT_THROW(cfg.validate(data), ValidationError);
  FitConfig neg = grid_config(dgp, -1.0);
  EXPECT_THROW(neg.validate(data), ValidationError);
}
