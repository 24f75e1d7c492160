#include <cmath>
#include <functional>

#include "doctest.h"
#include "generators.hpp"

#include "drcrt/aipw.hpp"
#include "drcrt/cox.hpp"
#include "drcrt/error.hpp"
#include "drcrt/estimator.hpp"
#include "drcrt/oracle.hpp"

using namespace drcrt;

namespace {

HazardModel step_model(int arm, Role role, std::vector<double> times, std::vector<double> increments) {
  CoxFit fit;
  fit.arm = arm;
  fit.role = role;
  fit.coefficients = Eigen::VectorXd(0);
  fit.baseline.times = std::move(times);
  fit.baseline.increments = increments;
  double cum = 0.0;
  for (double h : increments) fit.baseline.cumulative.push_back(cum += h);
  return HazardModel::from_cox(fit);
}

SubjectObservation observation(double time, int event, int arm) {
  SubjectObservation obs;
  obs.time = time;
  obs.event = event;
  obs.arm = arm;
  return obs;
}

void expect_error(ErrorKind expected, const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    CHECK(e.kind() == expected);
    return;
  }
  FAIL("expected an error");
}

SurvivalCurve curve(std::vector<double> times, std::vector<double> values) { return {std::move(times), std::move(values)}; }

std::span<const double> row(const DesignMatrix& x, std::size_t s) {
  return {x.data() + s * std::size_t(x.cols()), std::size_t(x.cols())};
}

}  // namespace

TEST_CASE("treated subject without censoring") {
  const ConditionalSurvivalOracle oracle(step_model(1, Role::Outcome, {0.5}, {-std::log(0.8)}),
                                         step_model(1, Role::Censoring, {}, {}));
  const PropensitySpec pi{0.5};
  CHECK(subject_contribution(observation(2.0, 1, 1), oracle, pi, 1.0) == doctest::Approx(1.2).epsilon(1e-14));
  CHECK(subject_contribution(observation(2.0, 1, 0), oracle, pi, 1.0) == doctest::Approx(0.8).epsilon(1e-14));
}

TEST_CASE("censored treated subject, evaluated by hand") {
  // Outcome jumps 0.1 at 0.5 and 0.3 at 1.5; censoring jump 0.2 at 1; subject censored at 1; t = 2.
  const ConditionalSurvivalOracle oracle(step_model(1, Role::Outcome, {0.5, 1.5}, {0.1, 0.3}),
                                         step_model(1, Role::Censoring, {1.0}, {0.2}));
  const double s_t = std::exp(-0.4), s_u = std::exp(-0.1), k_u = std::exp(-0.2);
  // term1 = 0, term2 = S(t), dM_c(1) = 1 - 0.2, term3 = (1/pi) S(t) dM_c / (K(1) S(1)).
  const double expected = -s_t + 2.0 * s_t * (1.0 - 0.2) / (k_u * s_u);
  CHECK(expected == doctest::Approx(0.777420).epsilon(1e-6));
  CHECK(subject_contribution(observation(1.0, 0, 1), oracle, {0.5}, 2.0) == doctest::Approx(expected).epsilon(1e-14));

  // Still at risk at t = 2: only the compensator enters.
  const double at_risk = 1.0 / (0.5 * k_u) - s_t + 2.0 * s_t * (-0.2) / (k_u * s_u);
  CHECK(subject_contribution(observation(2.5, 1, 1), oracle, {0.5}, 2.0) == doctest::Approx(at_risk).epsilon(1e-14));
}

TEST_CASE("averaging over assignment recovers the true survival fraction") {
  const double pi1 = 0.3;
  const ConditionalSurvivalOracle oracle(step_model(1, Role::Outcome, {0.5}, {-std::log(0.6)}),
                                         step_model(1, Role::Censoring, {}, {}));
  const std::vector<double> times{0.2, 0.4, 0.6, 0.8, 1.2, 1.4, 1.6, 1.8, 2.0, 3.0};
  double mean = 0.0;
  for (double u : times) {
    mean += pi1 * subject_contribution(observation(u, 1, 1), oracle, {pi1}, 1.0);
    mean += (1.0 - pi1) * subject_contribution(observation(u, 1, 0), oracle, {pi1}, 1.0);
  }
  CHECK(mean / double(times.size()) == doctest::Approx(0.6).epsilon(1e-14));
}

TEST_CASE("aggregation weights clusters or subjects") {
  DatasetBuilder b({}, {});
  b.add_cluster("a", 1).add_subject(1.0, 1).add_subject(2.0, 1);
  b.add_cluster("b", 0).add_subject(1.0, 1).add_subject(2.0, 0).add_subject(3.0, 1);
  const auto ds = std::move(b).build();
  const std::vector<double> values{1.0, 0.0, 1.0, 1.0, 0.0};
  const auto agg = aggregate_subjects(ds, values, 1);
  CHECK(agg[0][0] == doctest::Approx(0.583333).epsilon(1e-6));
  CHECK(agg[0][0] == doctest::Approx((0.5 + 2.0 / 3.0) / 2.0).epsilon(1e-15));
  CHECK(agg[1][0] == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("a single cluster aggregates to its own mean") {
  DatasetBuilder b({}, {});
  b.add_cluster("only", 1).add_subject(1.0, 1).add_subject(2.0, 0).add_subject(3.0, 1);
  const auto ds = std::move(b).build(DatasetOptions{false, 1, false});
  const std::vector<double> values{0.2, 0.5, 1.1};
  const auto agg = aggregate_subjects(ds, values, 1);
  CHECK(agg[0][0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(agg[1][0] == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("effects on the survival scale") {
  const auto s1 = curve({0.0, 1.0}, {1.0, 0.544});
  const auto s0 = curve({0.0, 1.0}, {1.0, 0.711});
  CHECK(effect_spce(s1, s0, EffectScale::Difference, 1.0) == doctest::Approx(-0.167).epsilon(1e-12));
  const auto half = curve({0.0, 1.0}, {1.0, 0.5});
  CHECK(effect_spce(half, half, EffectScale::Ratio, 1.0) == 1.0);
  const auto zero = curve({0.0, 1.0}, {1.0, 0.0});
  const auto point3 = curve({0.0, 1.0}, {1.0, 0.3});
  expect_error(ErrorKind::RatioDenominatorZero, [&] { effect_spce(point3, zero, EffectScale::Ratio, 1.0); });
}

TEST_CASE("trapezoid RMST") {
  CHECK(rmst_from_curve(curve({0.0, 1.0}, {1.0, 1.0}), 1.0).value == 1.0);
  CHECK(rmst_from_curve(curve({0.0, 0.5, 1.0}, {1.0, 0.5, 0.0}), 1.0).value == doctest::Approx(0.5).epsilon(1e-15));
  SurvivalCurve e;
  for (int k = 0; k <= 1000; ++k) {
    e.times.push_back(k * 0.001);
    e.values.push_back(std::exp(-k * 0.001));
  }
  CHECK(std::abs(rmst_from_curve(e, 1.0).value - (1.0 - std::exp(-1.0))) <= 1e-4);

  // tau off the grid is inserted by step evaluation.
  const auto steps = curve({0.0, 1.0, 2.0}, {1.0, 0.5, 0.25});
  CHECK(rmst_from_curve(steps, 1.5).value == doctest::Approx(0.75 + 0.25).epsilon(1e-15));
  const auto beyond = rmst_from_curve(steps, 3.0);
  CHECK(beyond.extrapolated);
  CHECK(beyond.value == doctest::Approx(0.75 + 0.375 + 0.25).epsilon(1e-15));
  expect_error(ErrorKind::TauBeyondGrid, [&] { rmst_from_curve(steps, 3.0, false); });
}

TEST_CASE("RMST effect is linear in the arm contributions") {
  testing::Gen g(131);
  for (int rep = 0; rep < 20; ++rep) {
    const auto ds = testing::random_dataset(g);
    const std::vector<double> grid{0.0, 0.25, 0.5, 0.8, 1.0, 1.7};
    const double tau = 1.0;
    const std::size_t n = ds.num_subjects(), gs = grid.size();
    std::vector<double> c1(n * gs), c0(n * gs), ones(n * gs, 1.0), zeros(n * gs, 0.0);
    for (auto& v : c1) v = g.uniform(-0.2, 1.3);
    for (auto& v : c0) v = g.uniform(-0.2, 1.3);
    const auto r1 = subject_rmst(grid, c1, tau), r0 = subject_rmst(grid, c0, tau);
    const auto a1 = aggregate_subjects(ds, c1, gs), a0 = aggregate_subjects(ds, c0, gs);
    for (auto level : {Level::Cluster, Level::Individual}) {
      const auto lv = std::size_t(level);
      const double direct = trapezoid(grid, a1[lv], tau) - trapezoid(grid, a0[lv], tau);
      CHECK(std::abs(effect_rmst(ds, r1, r0, EffectScale::Difference, level) - direct) <= 1e-12);
      CHECK(effect_rmst(ds, r1, r1, EffectScale::Difference, level) == 0.0);
      CHECK(effect_rmst(ds, subject_rmst(grid, ones, tau), subject_rmst(grid, zeros, tau), EffectScale::Difference,
                        level) == doctest::Approx(tau).epsilon(1e-15));
      const double ratio = effect_rmst(ds, r1, r0, EffectScale::Ratio, level);
      CHECK(ratio == doctest::Approx(trapezoid(grid, a1[lv], tau) / trapezoid(grid, a0[lv], tau)).epsilon(1e-12));
      // Restricted mean from the aggregated curve equals the aggregated per-subject means.
      CHECK(std::abs(trapezoid(grid, a1[lv], tau) - aggregate_subjects(ds, r1, 1)[lv][0]) <= 1e-12);
    }
  }
}

TEST_CASE("fast path equals the direct evaluation for every backend") {
  testing::Gen g(137);
  for (int rep = 0; rep < 6; ++rep) {
    const auto ds = testing::random_dataset(g, {4, 3, 10, 0.5, rep % 2 == 1});
    const auto fo = ModelFormula::parse("W + Z1");
    const auto fc = ModelFormula::parse("Z1 + Z2").with_role(Role::Censoring);
    const std::vector<double> report{0.3, 0.9};
    const auto grid = build_grid(ds, report, {}, true);
    for (auto backend : {Backend::MarginalCox, Backend::Frailty, Backend::KaplanMeier}) {
      for (int arm = 0; arm < 2; ++arm) {
        const ConditionalSurvivalOracle oracle(fit_hazard_model(ds, arm, Role::Outcome, backend, fo),
                                               fit_hazard_model(ds, arm, Role::Censoring, backend, fc));
        AipwOptions opt;
        opt.keep_subject_contributions = true;
        const PropensitySpec pi{0.4};
        const auto est = estimate_arm(ds, oracle, pi, grid, opt);
        const auto xo = build_design(ds, oracle.outcome().formula);
        const auto xc = build_design(ds, oracle.censoring().formula);
        double worst = 0.0;
        for (std::size_t s = 0; s < ds.num_subjects(); ++s) {
          SubjectObservation obs{ds.time(s), ds.event(s), ds.arm_of(s), row(xo, s), row(xc, s)};
          for (std::size_t k = 0; k < grid.size(); ++k) {
            const double ref = subject_contribution(obs, oracle, pi, grid[k]);
            worst = std::max(worst, std::abs(est.subject[s * grid.size() + k] - ref) / std::max(1.0, std::abs(ref)));
          }
        }
        CHECK(worst <= 1e-12);
        const auto agg = aggregate_subjects(ds, est.subject, grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) {
          CHECK(est.curve[0][k] == doctest::Approx(agg[0][k]).epsilon(1e-13));
          CHECK(est.curve[1][k] == doctest::Approx(agg[1][k]).epsilon(1e-13));
        }
        CHECK(est.curve[0][0] == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("size-one and equal-size clusters collapse the two levels") {
  testing::Gen g(139);
  for (int size : {1, 5}) {
    const auto ds = testing::random_dataset(g, {size == 1 ? 15 : 5, size, size, 0.4, false});
    const auto f = ModelFormula::parse("Z1 + Z2");
    for (int arm = 0; arm < 2; ++arm) {
      const ConditionalSurvivalOracle oracle(
          fit_hazard_model(ds, arm, Role::Outcome, Backend::MarginalCox, f),
          fit_hazard_model(ds, arm, Role::Censoring, Backend::MarginalCox, f.with_role(Role::Censoring)));
      const auto grid = build_grid(ds, std::vector<double>{0.5, 1.0}, {}, true);
      const auto est = estimate_arm(ds, oracle, {0.5}, grid);
      for (std::size_t k = 0; k < grid.size(); ++k) CHECK(std::abs(est.curve[0][k] - est.curve[1][k]) <= 1e-12);
    }
  }
}

TEST_CASE("oracles must match their arm slot") {
  testing::Gen g(149);
  const auto ds = testing::random_dataset(g);
  const auto f = ModelFormula::parse("Z1");
  const ConditionalSurvivalOracle o1(fit_hazard_model(ds, 1, Role::Outcome, Backend::MarginalCox, f),
                                     fit_hazard_model(ds, 1, Role::Censoring, Backend::MarginalCox, f));
  const ConditionalSurvivalOracle o0(fit_hazard_model(ds, 0, Role::Outcome, Backend::MarginalCox, f),
                                     fit_hazard_model(ds, 0, Role::Censoring, Backend::MarginalCox, f));
  const std::vector<double> grid{0.0, 1.0};
  const auto curves = estimate_survival(ds, {&o0, &o1}, {0.5}, Level::Cluster, grid);
  CHECK(curves[1].values.size() == 2);
  expect_error(ErrorKind::OracleArmMismatch,
                     [&] { estimate_survival(ds, {&o1, &o0}, {0.5}, Level::Cluster, grid); });
}

TEST_CASE("censoring survival floor") {
  const ConditionalSurvivalOracle oracle(step_model(1, Role::Outcome, {0.5}, {0.1}),
                                         step_model(1, Role::Censoring, {0.5}, {30.0}));
  AipwOptions strict;
  strict.floor_policy = FloorPolicy::Error;
  expect_error(ErrorKind::CensoringSurvivalUnderflow,
                     [&] { subject_contribution(observation(2.0, 1, 1), oracle, {0.5}, 1.0, strict); });
  std::size_t floored = 0;
  const double v = subject_contribution(observation(2.0, 1, 1), oracle, {0.5}, 1.0, {}, &floored);
  CHECK(floored > 0);
  CHECK(std::isfinite(v));
  expect_error(ErrorKind::InvalidConfig, [] { PropensitySpec{1.0}.validate(); });
}
