#pragma once

#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "drcrt/cox.hpp"
#include "drcrt/frailty.hpp"
#include "drcrt/simd.hpp"

namespace drcrt {

enum class Backend { MarginalCox, Frailty, KaplanMeier };
std::string_view to_string(Backend backend);

/// One fitted hazard model (a role in an arm) reduced to the form every
/// estimator evaluates:
///   survival  S(t | v) = exp(-phi(G(t) r)),   r = exp(beta'v)
///   increment dH(u_k | v) = phi'(G(u_k-) r) dH0(u_k) r
/// where G is the cumulative baseline used for survival (the Breslow sum for
/// Cox and frailty fits, -log of the product-limit curve for KM) and phi the
/// link (identity, or the gamma Laplace exponent).
struct HazardModel {
  Backend backend = Backend::MarginalCox;
  int arm = 0;
  Role role = Role::Outcome;
  ModelFormula formula;
  Eigen::VectorXd coefficients;
  BaselineHazard baseline;            // jump times and hazard increments
  std::vector<double> survival_cumhaz;  // G at each jump time
  simd::Link link;
  bool theta_boundary = false;

  static HazardModel from_cox(const CoxFit& fit);
  static HazardModel from_frailty(const FrailtyFit& fit);
  /// Covariate-free product-limit model of the role's events in the arm.
  static HazardModel kaplan_meier(const SurvivalDataset& ds, int arm, Role role);

  double risk_score(std::span<const double> v) const;

  /// G(t): sum over jumps <= t; G(t-): jumps < t.
  double cumhaz_at(double t) const;
  double cumhaz_before(double t) const;

  /// Right-continuous survival at t for a subject with risk score r.
  double survival(double t, double r) const;
  /// (u_k, dH(u_k | v)) for every baseline jump.
  std::vector<std::pair<double, double>> hazard_increments(double r) const;
};

HazardModel fit_hazard_model(const SurvivalDataset& ds, int arm, Role role, Backend backend,
                             const ModelFormula& formula, const FitControls& controls = {});

/// Outcome and censoring working models for one arm.
class ConditionalSurvivalOracle {
 public:
  ConditionalSurvivalOracle(HazardModel outcome, HazardModel censoring);

  int arm() const { return outcome_.arm; }
  Backend backend() const { return outcome_.backend; }
  const HazardModel& outcome() const { return outcome_; }
  const HazardModel& censoring() const { return censoring_; }

  /// P(T >= t | v) with v a row of the outcome design.
  double event_survival(std::span<const double> v, double t) const;
  /// K_c(t | v) with v a row of the censoring design.
  double censoring_survival(std::span<const double> v, double t) const;
  std::vector<std::pair<double, double>> censoring_hazard_increments(std::span<const double> v) const;

 private:
  HazardModel outcome_;
  HazardModel censoring_;
};

}  // namespace drcrt
