#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "drcrt/data.hpp"
#include "drcrt/formula.hpp"

namespace drcrt {

struct FitControls {
  double gradient_tol = 1e-8;
  int max_iterations = 50;
  double coefficient_bound = 50.0;  // |beta|_inf beyond this is treated as separation

  // gamma-frailty EM
  int em_max_iterations = 100;
  double em_tol = 1e-6;
  double theta_min = 1e-4;
  double theta_max = 1e6;
  double theta_init = 4.5;  // Kendall's tau = 0.1
};

/// Baseline cumulative hazard stored as jumps at the distinct event times.
struct BaselineHazard {
  std::vector<double> times;        // strictly increasing
  std::vector<double> increments;   // > 0
  std::vector<double> cumulative;   // running sum of increments

  std::size_t size() const { return times.size(); }
  /// Sum of increments at times <= t (right-continuous).
  double cumulative_at(double t) const;
  /// Sum of increments at times < t (left limit).
  double cumulative_before(double t) const;

  friend bool operator==(const BaselineHazard&, const BaselineHazard&) = default;
};

struct ConvergenceInfo {
  int iterations = 0;
  double gradient_norm = 0.0;
  double log_likelihood = 0.0;

  friend bool operator==(const ConvergenceInfo&, const ConvergenceInfo&) = default;
};

/// Breslow-ties log partial likelihood of right-censored data with an
/// optional per-subject offset. Subjects are sorted once at construction.
class PartialLikelihood {
 public:
  PartialLikelihood(std::span<const double> time, std::span<const int> status, const DesignMatrix& x,
                    std::span<const double> offset = {});

  struct Evaluation {
    double log_likelihood = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd information;  // negative Hessian
  };

  Evaluation evaluate(const Eigen::VectorXd& beta, bool with_information = true) const;
  double log_likelihood(const Eigen::VectorXd& beta) const { return evaluate(beta, false).log_likelihood; }

  /// Breslow increments d_k / sum_{U >= t_k} exp(beta'x + offset).
  BaselineHazard breslow(const Eigen::VectorXd& beta) const;

  /// Replaces the offset; values are given in the original subject order.
  void set_offset(std::span<const double> offset);

  std::size_t num_subjects() const { return time_.size(); }
  std::size_t num_covariates() const { return static_cast<std::size_t>(x_.cols()); }
  std::size_t num_events() const { return events_; }

 private:
  std::vector<double> linear_predictor(const Eigen::VectorXd& beta) const;

  std::vector<std::size_t> order_;  // sorted position -> original index
  std::vector<double> time_;
  std::vector<int> status_;
  std::vector<double> offset_;
  DesignMatrix x_;
  std::vector<std::size_t> group_end_;  // exclusive end of each tied-time group
  std::size_t events_ = 0;
};

struct NewtonResult {
  Eigen::VectorXd beta;
  ConvergenceInfo info;
};

/// Newton-Raphson with step halving from `start`.
/// Throws NonConvergence or SingularInformation.
NewtonResult maximize_partial_likelihood(const PartialLikelihood& pl, Eigen::VectorXd start,
                                         const FitControls& controls);

struct CoxFit {
  int arm = 0;
  Role role = Role::Outcome;
  ModelFormula formula;
  Eigen::VectorXd coefficients;
  BaselineHazard baseline;
  ConvergenceInfo convergence;

  double linear_predictor(std::span<const double> v) const;
};

/// Working-independence Cox fit on the subjects of arm `arm`. For the
/// censoring role the event indicator is 1 - Delta.
CoxFit fit_cox(const SurvivalDataset& ds, int arm, Role role, const ModelFormula& formula,
               const FitControls& controls = {});

/// exp(-Lambda0(t) exp(beta'v)), right-continuous in t.
double predict_event_survival(const CoxFit& fit, std::span<const double> v, double t);
double predict_censoring_survival(const CoxFit& fit, std::span<const double> v, double t);

/// (u_k, dH0(u_k) exp(alpha'v)) for every baseline jump.
std::vector<std::pair<double, double>> censoring_hazard_increments(const CoxFit& fit,
                                                                   std::span<const double> v);

/// Event indicator of a subject for the given role.
inline int role_status(const SurvivalDataset& ds, std::size_t s, Role role) {
  return role == Role::Outcome ? ds.event(s) : 1 - ds.event(s);
}

}  // namespace drcrt
