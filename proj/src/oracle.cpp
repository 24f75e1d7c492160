#include "drcrt/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "drcrt/error.hpp"
#include "drcrt/nonparam.hpp"

namespace drcrt {

std::string_view to_string(Backend backend) {
  switch (backend) {
    case Backend::MarginalCox: return "marginal";
    case Backend::Frailty: return "frailty";
    case Backend::KaplanMeier: return "km";
  }
  return "unknown";
}

HazardModel HazardModel::from_cox(const CoxFit& fit) {
  HazardModel m;
  m.backend = Backend::MarginalCox;
  m.arm = fit.arm;
  m.role = fit.role;
  m.formula = fit.formula;
  m.coefficients = fit.coefficients;
  m.baseline = fit.baseline;
  m.survival_cumhaz = fit.baseline.cumulative;
  m.link = simd::Link::exponential();
  return m;
}

HazardModel HazardModel::from_frailty(const FrailtyFit& fit) {
  HazardModel m;
  m.backend = Backend::Frailty;
  m.arm = fit.arm;
  m.role = fit.role;
  m.formula = fit.formula;
  m.coefficients = fit.coefficients;
  m.baseline = fit.baseline;
  m.survival_cumhaz = fit.baseline.cumulative;
  m.link = simd::Link::gamma(fit.theta);
  m.theta_boundary = fit.theta_boundary;
  return m;
}

HazardModel HazardModel::kaplan_meier(const SurvivalDataset& ds, int arm, Role role) {
  const auto subjects = ds.subjects_in_arm(arm);
  if (subjects.empty()) fail(ErrorKind::NoSubjectsInArm, fmt::format("no subjects in arm {}", arm));
  std::vector<double> time, weight(subjects.size(), 1.0);
  std::vector<int> status;
  for (std::size_t s : subjects) {
    time.push_back(ds.time(s));
    status.push_back(role_status(ds, s, role));
  }
  const ProductLimit pl = weighted_product_limit(time, status, weight);
  if (pl.times.empty()) fail(ErrorKind::NoEventsInRole, fmt::format("no {} events in arm {}", to_string(role), arm));

  HazardModel m;
  m.backend = Backend::KaplanMeier;
  m.arm = arm;
  m.role = role;
  m.formula = ModelFormula().with_role(role);
  m.coefficients = Eigen::VectorXd(0);
  m.baseline.times = pl.times;
  m.baseline.increments = pl.hazard;
  m.baseline.cumulative.resize(pl.hazard.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < pl.hazard.size(); ++k) {
    acc += pl.hazard[k];
    m.baseline.cumulative[k] = acc;
    m.survival_cumhaz.push_back(pl.survival[k] > 0.0 ? -std::log(pl.survival[k])
                                                     : std::numeric_limits<double>::infinity());
  }
  m.link = simd::Link::exponential();
  return m;
}

double HazardModel::risk_score(std::span<const double> v) const {
  double eta = 0.0;
  for (Eigen::Index k = 0; k < coefficients.size(); ++k) eta += coefficients(k) * v[static_cast<std::size_t>(k)];
  return std::exp(eta);
}

double HazardModel::cumhaz_at(double t) const {
  const auto& ts = baseline.times;
  const auto it = std::upper_bound(ts.begin(), ts.end(), t);
  return it == ts.begin() ? 0.0 : survival_cumhaz[static_cast<std::size_t>(it - ts.begin()) - 1];
}

double HazardModel::cumhaz_before(double t) const {
  const auto& ts = baseline.times;
  const auto it = std::lower_bound(ts.begin(), ts.end(), t);
  return it == ts.begin() ? 0.0 : survival_cumhaz[static_cast<std::size_t>(it - ts.begin()) - 1];
}

namespace {

double phi(double x, simd::Link link) {
  return link.kind == simd::Link::Gamma ? link.theta * std::log1p(x / link.theta) : x;
}

double dphi(double x, simd::Link link) {
  return link.kind == simd::Link::Gamma ? link.theta / (link.theta + x) : 1.0;
}

}  // namespace

double HazardModel::survival(double t, double r) const { return std::exp(-phi(cumhaz_at(t) * r, link)); }

std::vector<std::pair<double, double>> HazardModel::hazard_increments(double r) const {
  std::vector<std::pair<double, double>> out;
  out.reserve(baseline.size());
  double left = 0.0;
  for (std::size_t k = 0; k < baseline.size(); ++k) {
    out.emplace_back(baseline.times[k], dphi(left * r, link) * baseline.increments[k] * r);
    left = survival_cumhaz[k];
  }
  return out;
}

HazardModel fit_hazard_model(const SurvivalDataset& ds, int arm, Role role, Backend backend,
                             const ModelFormula& formula, const FitControls& controls) {
  switch (backend) {
    case Backend::MarginalCox: return HazardModel::from_cox(fit_cox(ds, arm, role, formula, controls));
    case Backend::Frailty: return HazardModel::from_frailty(fit_frailty(ds, arm, role, formula, controls));
    case Backend::KaplanMeier: return HazardModel::kaplan_meier(ds, arm, role);
  }
  fail(ErrorKind::InvalidConfig, "unknown backend");
}

ConditionalSurvivalOracle::ConditionalSurvivalOracle(HazardModel outcome, HazardModel censoring)
    : outcome_(std::move(outcome)), censoring_(std::move(censoring)) {
  if (outcome_.arm != censoring_.arm)
    fail(ErrorKind::OracleArmMismatch,
         fmt::format("outcome model is for arm {} but censoring model for arm {}", outcome_.arm, censoring_.arm));
  if (outcome_.role != Role::Outcome || censoring_.role != Role::Censoring)
    fail(ErrorKind::InvalidConfig, "oracle needs an outcome-role and a censoring-role model");
}

double ConditionalSurvivalOracle::event_survival(std::span<const double> v, double t) const {
  return outcome_.survival(t, outcome_.risk_score(v));
}

double ConditionalSurvivalOracle::censoring_survival(std::span<const double> v, double t) const {
  return censoring_.survival(t, censoring_.risk_score(v));
}

std::vector<std::pair<double, double>> ConditionalSurvivalOracle::censoring_hazard_increments(
    std::span<const double> v) const {
  return censoring_.hazard_increments(censoring_.risk_score(v));
}

}  // namespace drcrt
