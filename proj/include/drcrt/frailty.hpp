#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "drcrt/cox.hpp"

namespace drcrt {

/// Shared gamma-frailty Cox fit: hazard B_i h0(t) exp(beta'v) with
/// B_i ~ Gamma(shape = theta, rate = theta). The baseline is on the B = 1 scale.
struct FrailtyFit {
  int arm = 0;
  Role role = Role::Outcome;
  ModelFormula formula;
  Eigen::VectorXd coefficients;
  BaselineHazard baseline;
  double theta = 1.0;
  bool theta_boundary = false;  // theta hit the upper search bound: no detectable frailty
  int em_iterations = 0;
  double log_likelihood = 0.0;  // observed-data (frailty-integrated) log-likelihood
  ConvergenceInfo convergence;  // of the last M-step

  double linear_predictor(std::span<const double> v) const;
  double kendall_tau() const;
};

FrailtyFit fit_frailty(const SurvivalDataset& ds, int arm, Role role, const ModelFormula& formula,
                       const FitControls& controls = {});

/// Gamma-frailty observed-data log-likelihood for the arm/role subset at the
/// given parameters, with the baseline treated as point masses at its jumps.
double frailty_log_likelihood(const SurvivalDataset& ds, int arm, Role role, const ModelFormula& formula,
                              const Eigen::VectorXd& beta, const BaselineHazard& baseline, double theta);

double kendall_tau(double theta);
double theta_from_kendall(double tau);

/// (theta / (theta + cumhaz))^theta, the gamma Laplace transform.
double gamma_laplace(double theta, double cumhaz);

/// E[B | T >= t] = theta / (theta + Lambda0(t) exp(beta'v)).
double conditional_frailty_mean(const FrailtyFit& fit, std::span<const double> v, double t);

double marginal_event_survival(const FrailtyFit& fit, std::span<const double> v, double t);
double marginal_censoring_survival(const FrailtyFit& fit, std::span<const double> v, double t);

/// (u_k, E[R | C >= u_k-] dH0(u_k) exp(alpha'v)) for every baseline jump.
std::vector<std::pair<double, double>> marginal_censoring_hazard_increments(const FrailtyFit& fit,
                                                                            std::span<const double> v);

}  // namespace drcrt
