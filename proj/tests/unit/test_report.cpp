#include <cmath>

#include "doctest.h"

#include "drcrt/error.hpp"
#include "drcrt/report.hpp"
#include "drcrt/simlab.hpp"

using namespace drcrt;

namespace {

const SurvivalDataset& scenario_data() {
  static const SurvivalDataset ds = [] {
    auto spec = ScenarioSpec::preset("1");
    spec.size_min = 10;
    spec.size_max = 30;
    return generate(spec, 3);
  }();
  return ds;
}

EstimatorConfig marginal_config() {
  const auto spec = ScenarioSpec::preset("1");
  EstimatorConfig c;
  c.method = Method::Marginal;
  c.outcome_formula = spec.correct_formula(Role::Outcome);
  c.censoring_formula = spec.correct_formula(Role::Censoring);
  c.times = {0.25, 0.5, 1.0};
  c.taus = {0.5, 1.0};
  return c;
}

EstimandReport report_for(const EstimatorConfig& c, Estimand estimand, EffectScale scale, bool jackknife) {
  const auto& ds = scenario_data();
  const auto point = estimate(ds, c);
  if (!jackknife) return make_report(ds, c, estimand, scale, point, nullptr, 0.05);
  const auto reps = leave_one_cluster_out(ds, [&](const SurvivalDataset& d) { return estimate(d, c).target_vector(); });
  return make_report(ds, c, estimand, scale, point, &reps, 0.05);
}

void expect_schema_violation(const nlohmann::json& j) {
  try {
    EstimandReport::from_json(j);
    FAIL("expected SchemaViolation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SchemaViolation);
  }
}

}  // namespace

TEST_CASE("report without variance has no interval fields") {
  const auto r = report_for(marginal_config(), Estimand::SPCE, EffectScale::Difference, false);
  const auto j = r.to_json();
  CHECK(j["variance"] == "none");
  for (const char* lv : {"cluster", "individual"})
    for (const auto& row : j["levels"][lv]["rows"])
      for (const char* q : {"arm1", "arm0", "effect"}) {
        CHECK(row[q].contains("estimate"));
        CHECK(!row[q].contains("se"));
        CHECK(!row[q].contains("lower"));
        CHECK(!row[q].contains("upper"));
      }
  CHECK(EstimandReport::from_json(nlohmann::json::parse(j.dump())) == r);
}

TEST_CASE("jackknife report round-trips losslessly") {
  for (auto scale : {EffectScale::Difference, EffectScale::Ratio}) {
    for (auto estimand : {Estimand::SPCE, Estimand::RMST}) {
      const auto r = report_for(marginal_config(), estimand, scale, true);
      REQUIRE(r.levels[0].rows.front().effect.interval.has_value());
      const auto back = EstimandReport::from_json(nlohmann::json::parse(r.to_json().dump()));
      CHECK(back == r);
      for (const auto& lvl : r.levels)
        for (const auto& row : lvl.rows) {
          const auto& ci = *row.effect.interval;
          CHECK(ci.se >= 0.0);
          CHECK(ci.lower <= row.effect.value);
          CHECK(ci.upper >= row.effect.value);
        }
    }
  }
}

TEST_CASE("restricted means in a report are trapezoids of its curves") {
  const auto r = report_for(marginal_config(), Estimand::RMST, EffectScale::Difference, false);
  for (const auto& lvl : r.levels)
    for (const auto& row : lvl.rows) {
      CHECK(std::abs(row.arm1.value - trapezoid(r.grid, lvl.curve[1], row.time)) <= 1e-12);
      CHECK(std::abs(row.arm0.value - trapezoid(r.grid, lvl.curve[0], row.time)) <= 1e-12);
      CHECK(row.effect.value == row.arm1.value - row.arm0.value);
    }
}

TEST_CASE("text report header") {
  const auto r = report_for(marginal_config(), Estimand::SPCE, EffectScale::Difference, false);
  const auto text = r.to_text();
  CHECK(text.find("Clusters (M):    50\n") != std::string::npos);
  CHECK(text.find("Obs (N):         " + std::to_string(scenario_data().num_subjects()) + "\n") != std::string::npos);
  CHECK(text.find("Treatment probs (p0, p1): 0.5, 0.5") != std::string::npos);
  CHECK(text.find("Cluster-level SPCE:") != std::string::npos);
  CHECK(text.find("Individual-level SPCE:") != std::string::npos);
  CHECK(text.find("t=1") != std::string::npos);
}

TEST_CASE("schema violations fail loudly") {
  const auto r = report_for(marginal_config(), Estimand::SPCE, EffectScale::Difference, false);
  auto j = r.to_json();
  auto bad = j;
  bad["schema"] = "other";
  expect_schema_violation(bad);
  bad = j;
  bad["version"] = 2;
  expect_schema_violation(bad);
  bad = j;
  bad.erase("grid");
  expect_schema_violation(bad);
  bad = j;
  bad["variance"] = "bootstrap";
  expect_schema_violation(bad);
  bad = j;
  bad["variance"] = "jackknife";
  expect_schema_violation(bad);
  bad = j;
  bad["levels"]["cluster"]["curve"]["arm1"].erase(0);
  expect_schema_violation(bad);
  bad = j;
  bad["clusters"] = "fifty";
  expect_schema_violation(bad);
}

TEST_CASE("Kaplan-Meier and outcome-regression reports") {
  auto c = marginal_config();
  c.method = Method::KaplanMeier;
  auto r = report_for(c, Estimand::SPCE, EffectScale::Difference, false);
  CHECK(r.method == "km");
  CHECK(r.outcome_formula.empty());
  c.method = Method::OutcomeRegression;
  c.regression_backend = Backend::Frailty;
  r = report_for(c, Estimand::SPCE, EffectScale::Difference, false);
  CHECK(r.method == "outcome_regression (frailty)");
  CHECK(r.censoring_formula.empty());
  CHECK(EstimandReport::from_json(r.to_json()) == r);
}
