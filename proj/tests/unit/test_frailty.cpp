#include <cmath>
#include <random>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "doctest.h"
#include "generators.hpp"

#include "drcrt/error.hpp"
#include "drcrt/frailty.hpp"

using namespace drcrt;

namespace {

FrailtyFit jump_fit(std::vector<double> times, std::vector<double> increments, double theta, Role role) {
  FrailtyFit fit;
  fit.role = role;
  fit.theta = theta;
  fit.coefficients = Eigen::VectorXd::Zero(1);
  fit.baseline.times = std::move(times);
  fit.baseline.increments = increments;
  double cum = 0.0;
  for (double h : increments) fit.baseline.cumulative.push_back(cum += h);
  return fit;
}

// E[exp(-B lambda)] for B ~ Gamma(shape theta, rate theta) by quadrature.
double laplace_by_quadrature(double theta, double lambda) {
  const boost::math::gamma_distribution<double> dist(theta, 1.0 / theta);
  auto f = [&](double b) { return b <= 0.0 ? 0.0 : std::exp(-b * lambda) * boost::math::pdf(dist, b); };
  if (theta < 1.0) {
    // Integrable singularity at 0: split so tanh-sinh handles the endpoint.
    boost::math::quadrature::tanh_sinh<double> ts;
    boost::math::quadrature::exp_sinh<double> es;
    return ts.integrate(f, 0.0, 1.0) + es.integrate(f, 1.0, std::numeric_limits<double>::infinity());
  }
  boost::math::quadrature::exp_sinh<double> es;
  return es.integrate(f, 0.0, std::numeric_limits<double>::infinity());
}

struct FrailtyDesign {
  int clusters = 40;
  int size = 25;
  double shape = 2.0;  // frailty shape = rate; <= 0 for no frailty
  double beta = 0.5;
  double censoring_rate = 0.3;
};

SurvivalDataset frailty_data(testing::Gen& g, const FrailtyDesign& d) {
  DatasetBuilder b({}, {"Z"});
  for (int arm = 1; arm >= 0; --arm) {
    for (int c = 0; c < d.clusters; ++c) {
      b.add_cluster("a" + std::to_string(arm) + "c" + std::to_string(c), arm);
      const double frail =
          d.shape > 0.0 ? std::gamma_distribution<double>(d.shape, 1.0 / d.shape)(g.engine()) : 1.0;
      for (int j = 0; j < d.size; ++j) {
        const double z = g.normal();
        const double t = g.exponential(frail * std::exp(d.beta * z));
        const double c_time = g.exponential(d.censoring_rate);
        b.add_subject(std::min(t, c_time), t <= c_time ? 1 : 0, {z});
      }
    }
  }
  return std::move(b).build();
}

}  // namespace

TEST_CASE("conditional frailty mean closed form") {
  const std::vector<double> v{0.0};
  CHECK(conditional_frailty_mean(jump_fit({1.0}, {1.0}, 1.0, Role::Outcome), v, 0.0) == 1.0);
  CHECK(conditional_frailty_mean(jump_fit({1.0}, {1.0}, 1.0, Role::Outcome), v, 1.0) == doctest::Approx(0.5));
  CHECK(conditional_frailty_mean(jump_fit({1.0}, {3.0}, 2.0, Role::Outcome), v, 1.0) == doctest::Approx(0.4));
}

TEST_CASE("marginal survival closed form and its no-frailty limit") {
  const std::vector<double> v{0.0};
  CHECK(marginal_event_survival(jump_fit({1.0}, {1.0}, 1.0, Role::Outcome), v, 1.0) == doctest::Approx(0.5));
  CHECK(marginal_event_survival(jump_fit({1.0}, {1.0}, 1.0, Role::Outcome), v, 0.0) == 1.0);
  CHECK(std::abs(marginal_event_survival(jump_fit({1.0}, {1.0}, 1e6, Role::Outcome), v, 1.0) - std::exp(-1.0)) <=
        1e-5);
  CHECK(marginal_censoring_survival(jump_fit({1.0}, {1.0}, 1.0, Role::Censoring), v, 1.0) == doctest::Approx(0.5));
  CHECK(std::abs(marginal_censoring_survival(jump_fit({1.0}, {1.0}, 1e6, Role::Censoring), v, 1.0) -
                 std::exp(-1.0)) <= 1e-5);
}

TEST_CASE("gamma Laplace transform agrees with quadrature") {
  testing::Gen g(71);
  for (int i = 0; i < 100; ++i) {
    const double theta = std::exp(g.uniform(std::log(0.2), std::log(50.0)));
    const double lambda = g.uniform(0.0, 5.0);
    CHECK(std::abs(gamma_laplace(theta, lambda) - laplace_by_quadrature(theta, lambda)) <= 1e-6);
  }
}

TEST_CASE("Kendall's tau round trip") {
  testing::Gen g(73);
  for (int i = 0; i < 1000; ++i) {
    const double tau = g.uniform(1e-6, 1.0 - 1e-6);
    CHECK(std::abs(kendall_tau(theta_from_kendall(tau)) - tau) <= 1e-12);
  }
  CHECK(kendall_tau(2.0) == doctest::Approx(0.2));
  CHECK(kendall_tau(4.5) == doctest::Approx(0.1));
}

TEST_CASE("marginal censoring increments use the left limit") {
  const std::vector<double> v{0.0};
  const auto single = marginal_censoring_hazard_increments(jump_fit({1.0}, {1.0}, 1.0, Role::Censoring), v);
  REQUIRE(single.size() == 1);
  CHECK(single[0].second == doctest::Approx(1.0).epsilon(1e-14));
  const auto fit1 = jump_fit({1.0}, {1.0}, 1.0, Role::Censoring);
  CHECK(-std::log(marginal_censoring_survival(fit1, v, 1.0)) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  testing::Gen g(79);
  for (int i = 0; i < 50; ++i) {
    const double gamma = std::exp(g.uniform(-1.0, 3.0));
    const double h1 = g.uniform(0.01, 2.0), h2 = g.uniform(0.01, 2.0);
    const double eta = g.uniform(-1.0, 1.0);
    auto fit = jump_fit({0.5, 1.5}, {h1, h2}, gamma, Role::Censoring);
    fit.coefficients(0) = 1.0;
    const std::vector<double> w{eta};
    const double r = std::exp(eta);
    const auto inc = marginal_censoring_hazard_increments(fit, w);
    REQUIRE(inc.size() == 2);
    CHECK(inc[0].second == doctest::Approx(h1 * r).epsilon(1e-13));
    CHECK(inc[1].second == doctest::Approx(gamma / (gamma + h1 * r) * h2 * r).epsilon(1e-13));
    // Summed left-limit increments bracket -log K from above; right limits bracket it from below.
    const double neg_log_k = gamma * std::log1p((h1 + h2) * r / gamma);
    CHECK(-std::log(marginal_censoring_survival(fit, w, 2.0)) == doctest::Approx(neg_log_k).epsilon(1e-13));
    const double right = gamma / (gamma + h1 * r) * h1 * r + gamma / (gamma + (h1 + h2) * r) * h2 * r;
    CHECK(inc[0].second + inc[1].second >= neg_log_k);
    CHECK(right <= neg_log_k);
  }
}

TEST_CASE("large frailty shape reduces increments to the Cox ones") {
  const std::vector<double> v{0.3};
  auto fit = jump_fit({0.5, 1.0, 2.0}, {0.2, 0.4, 0.1}, 1e9, Role::Censoring);
  fit.coefficients(0) = 1.0;
  const auto inc = marginal_censoring_hazard_increments(fit, v);
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(inc[k].second == doctest::Approx(fit.baseline.increments[k] * std::exp(0.3)).epsilon(1e-8));
}

TEST_CASE("marginal survival is nonincreasing and starts at one") {
  testing::Gen g(83);
  const auto ds = frailty_data(g, {10, 10, 2.0, 0.5, 0.3});
  const auto fit = fit_frailty(ds, 1, Role::Outcome, ModelFormula::parse("Z"));
  for (double z : {-1.0, 0.0, 1.5}) {
    const std::vector<double> v{z};
    CHECK(marginal_event_survival(fit, v, 0.0) == 1.0);
    CHECK(conditional_frailty_mean(fit, v, 0.0) == 1.0);
    double prev = 1.0, prev_mean = 1.0;
    for (double t = 0.05; t < 5.0; t += 0.05) {
      const double s = marginal_event_survival(fit, v, t), m = conditional_frailty_mean(fit, v, t);
      CHECK(s <= prev);
      CHECK(s > 0.0);
      CHECK(m <= prev_mean);
      CHECK(m > 0.0);
      prev = s;
      prev_mean = m;
    }
  }
}

TEST_CASE("frailty variance is recovered") {
  testing::Gen g(89);
  const int reps = 20;
  double sum = 0.0, sum2 = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    const auto ds = frailty_data(g, {40, 25, 2.0, 0.5, 0.3});
    const auto fit = fit_frailty(ds, 1, Role::Outcome, ModelFormula::parse("Z"));
    CHECK(!fit.theta_boundary);
    CHECK(fit.coefficients(0) == doctest::Approx(0.5).epsilon(0.2));
    sum += fit.theta;
    sum2 += fit.theta * fit.theta;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sum2 / reps - mean * mean) / (reps - 1));
  MESSAGE("mean theta " << mean << " (se " << se << ")");
  CHECK(std::abs(mean - 2.0) <= 3.0 * se);
}

TEST_CASE("singleton clusters put theta on the boundary") {
  testing::Gen g(97);
  int boundary = 0;
  for (int rep = 0; rep < 5; ++rep) {
    const auto ds = frailty_data(g, {300, 1, 0.0, 0.5, 0.3});
    const auto fit = fit_frailty(ds, 1, Role::Outcome, ModelFormula::parse("Z"));
    boundary += fit.theta_boundary;
    if (fit.theta_boundary) CHECK(fit.theta >= 1e5);
  }
  CHECK(boundary >= 3);
}

TEST_CASE("fitted parameters are a local maximum of the observed-data likelihood") {
  testing::Gen g(101);
  const auto ds = frailty_data(g, {2, 12, 1.5, 0.5, 0.3});
  const auto formula = ModelFormula::parse("Z");
  const auto fit = fit_frailty(ds, 1, Role::Outcome, formula);
  REQUIRE(!fit.theta_boundary);
  const double best = frailty_log_likelihood(ds, 1, Role::Outcome, formula, fit.coefficients, fit.baseline, fit.theta);
  CHECK(best == doctest::Approx(fit.log_likelihood).epsilon(1e-10));
  for (double db : {-0.05, 0.0, 0.05}) {
    for (double dt : {-0.1, 0.0, 0.1}) {
      for (double dh : {-0.05, 0.0, 0.05}) {
        Eigen::VectorXd beta = fit.coefficients;
        beta(0) += db;
        BaselineHazard bh = fit.baseline;
        for (auto& h : bh.increments) h *= std::exp(dh);
        double cum = 0.0;
        for (std::size_t k = 0; k < bh.size(); ++k) bh.cumulative[k] = cum += bh.increments[k];
        const double ll = frailty_log_likelihood(ds, 1, Role::Outcome, formula, beta, bh, fit.theta * std::exp(dt));
        CHECK(ll <= best + 1e-6);
      }
    }
  }
}

TEST_CASE("frailty fit needs events of its role") {
  const auto ds = testing::dataset_from_rows(
      {{"a", 1, 1.0, 0}, {"a", 1, 2.0, 0}, {"b", 1, 1.5, 0}, {"c", 0, 1.0, 1}, {"d", 0, 2.0, 1}},
      DatasetOptions{false, 2});
  try {
    fit_frailty(ds, 1, Role::Outcome, ModelFormula::parse(""));
    FAIL("expected NoEventsInRole");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoEventsInRole);
  }
}
