#include "drcrt/cox.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include "drcrt/error.hpp"
#include "drcrt/simd.hpp"

namespace drcrt {

double BaselineHazard::cumulative_at(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  return it == times.begin() ? 0.0 : cumulative[static_cast<std::size_t>(it - times.begin()) - 1];
}

double BaselineHazard::cumulative_before(double t) const {
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  return it == times.begin() ? 0.0 : cumulative[static_cast<std::size_t>(it - times.begin()) - 1];
}

PartialLikelihood::PartialLikelihood(std::span<const double> time, std::span<const int> status,
                                     const DesignMatrix& x, std::span<const double> offset) {
  const std::size_t n = time.size();
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return time[a] < time[b]; });

  time_.resize(n);
  status_.resize(n);
  offset_.assign(n, 0.0);
  x_.resize(static_cast<Eigen::Index>(n), x.cols());
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t s = order_[r];
    time_[r] = time[s];
    status_[r] = status[s];
    events_ += static_cast<std::size_t>(status[s]);
    x_.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(s));
  }
  for (std::size_t r = 0; r < n; ++r)
    if (r + 1 == n || time_[r + 1] != time_[r]) group_end_.push_back(r + 1);
  if (!offset.empty()) set_offset(offset);
}

void PartialLikelihood::set_offset(std::span<const double> offset) {
  for (std::size_t r = 0; r < order_.size(); ++r) offset_[r] = offset[order_[r]];
}

std::vector<double> PartialLikelihood::linear_predictor(const Eigen::VectorXd& beta) const {
  std::vector<double> eta(offset_);
  if (beta.size() > 0) {
    Eigen::Map<Eigen::VectorXd> e(eta.data(), static_cast<Eigen::Index>(eta.size()));
    e.noalias() += x_ * beta;
  }
  return eta;
}

PartialLikelihood::Evaluation PartialLikelihood::evaluate(const Eigen::VectorXd& beta,
                                                          bool with_information) const {
  const Eigen::Index p = x_.cols();
  const std::size_t n = time_.size();
  Evaluation ev;
  ev.gradient = Eigen::VectorXd::Zero(p);
  if (with_information) ev.information = Eigen::MatrixXd::Zero(p, p);
  if (n == 0) return ev;

  std::vector<double> eta = linear_predictor(beta);
  const double shift = *std::max_element(eta.begin(), eta.end());
  std::vector<double> w(n);
  for (std::size_t r = 0; r < n; ++r) w[r] = eta[r] - shift;
  simd::kernels().exp_array(w.data(), n, w.data());

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xbar(p);

  // Walk tied-time groups from the latest time backwards so the risk sets
  // {U >= t} accumulate incrementally.
  std::size_t end = n;
  for (std::size_t g = group_end_.size(); g-- > 0;) {
    const std::size_t begin = g == 0 ? 0 : group_end_[g - 1];
    end = group_end_[g];
    int d = 0;
    for (std::size_t r = begin; r < end; ++r) {
      const auto row = x_.row(static_cast<Eigen::Index>(r));
      s0 += w[r];
      if (p > 0) {
        s1.noalias() += w[r] * row.transpose();
        if (with_information) s2.noalias() += w[r] * row.transpose() * row;
      }
      if (status_[r]) {
        ++d;
        ev.log_likelihood += eta[r];
        if (p > 0) ev.gradient.noalias() += row.transpose();
      }
    }
    if (d == 0) continue;
    ev.log_likelihood -= d * (std::log(s0) + shift);
    if (p > 0) {
      xbar = s1 / s0;
      ev.gradient.noalias() -= d * xbar;
      if (with_information) ev.information.noalias() += d * (s2 / s0 - xbar * xbar.transpose());
    }
  }
  return ev;
}

BaselineHazard PartialLikelihood::breslow(const Eigen::VectorXd& beta) const {
  BaselineHazard bh;
  const std::size_t n = time_.size();
  if (n == 0) return bh;
  std::vector<double> eta = linear_predictor(beta);
  const double shift = *std::max_element(eta.begin(), eta.end());
  std::vector<double> w(n);
  for (std::size_t r = 0; r < n; ++r) w[r] = eta[r] - shift;
  simd::kernels().exp_array(w.data(), n, w.data());

  double s0 = 0.0;
  for (std::size_t g = group_end_.size(); g-- > 0;) {
    const std::size_t begin = g == 0 ? 0 : group_end_[g - 1];
    int d = 0;
    for (std::size_t r = begin; r < group_end_[g]; ++r) {
      s0 += w[r];
      d += status_[r];
    }
    if (d == 0) continue;
    bh.times.push_back(time_[begin]);
    bh.increments.push_back(d / s0 * std::exp(-shift));
  }
  std::reverse(bh.times.begin(), bh.times.end());
  std::reverse(bh.increments.begin(), bh.increments.end());
  bh.cumulative.resize(bh.increments.size());
  std::partial_sum(bh.increments.begin(), bh.increments.end(), bh.cumulative.begin());
  return bh;
}

namespace {

// Solves information * step = gradient, rejecting (near-)singular systems.
// The check is done on the correlation-scaled matrix so that covariate units
// do not matter.
Eigen::VectorXd newton_step(const Eigen::MatrixXd& info, const Eigen::VectorXd& grad) {
  const Eigen::Index p = info.rows();
  Eigen::VectorXd scale(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    if (!(info(k, k) > 0.0) || !std::isfinite(info(k, k)))
      fail(ErrorKind::SingularInformation, fmt::format("information has no curvature in coefficient {}", k));
    scale(k) = 1.0 / std::sqrt(info(k, k));
  }
  const Eigen::MatrixXd scaled = scale.asDiagonal() * info * scale.asDiagonal();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(scaled);
  if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 1e-10).any())
    fail(ErrorKind::SingularInformation, "information matrix is singular (collinear covariates?)");
  return scale.asDiagonal() * ldlt.solve(scale.asDiagonal() * grad);
}

}  // namespace

NewtonResult maximize_partial_likelihood(const PartialLikelihood& pl, Eigen::VectorXd beta,
                                         const FitControls& controls) {
  NewtonResult res;
  auto ev = pl.evaluate(beta);
  for (int iter = 0;; ++iter) {
    const double gnorm = ev.gradient.size() ? ev.gradient.cwiseAbs().maxCoeff() : 0.0;
    res.info = {iter, gnorm, ev.log_likelihood};
    if (gnorm <= controls.gradient_tol) break;
    if (iter >= controls.max_iterations)
      fail(ErrorKind::NonConvergence,
           fmt::format("Newton-Raphson did not converge in {} iterations (|grad| = {:.3g})", iter, gnorm));

    const Eigen::VectorXd step = newton_step(ev.information, ev.gradient);
    const double slack = 1e-12 * (1.0 + std::abs(ev.log_likelihood));
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h < 40; ++h, t *= 0.5) {
      Eigen::VectorXd cand = beta + t * step;
      auto cand_ev = pl.evaluate(cand);
      if (std::isfinite(cand_ev.log_likelihood) && cand_ev.log_likelihood >= ev.log_likelihood - slack) {
        beta = std::move(cand);
        ev = std::move(cand_ev);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Rounding noise in the log-likelihood near the optimum can block every
      // halved step; accept the current point if it is already nearly stationary.
      if (gnorm <= 1e-5) break;
      fail(ErrorKind::NonConvergence, "step halving failed to increase the partial likelihood");
    }
    if (beta.size() && beta.cwiseAbs().maxCoeff() > controls.coefficient_bound)
      fail(ErrorKind::NonConvergence,
           fmt::format("coefficient exceeded {} in magnitude (monotone likelihood)", controls.coefficient_bound));
  }
  res.beta = std::move(beta);
  return res;
}

double CoxFit::linear_predictor(std::span<const double> v) const {
  double eta = 0.0;
  for (Eigen::Index k = 0; k < coefficients.size(); ++k) eta += coefficients(k) * v[static_cast<std::size_t>(k)];
  return eta;
}

CoxFit fit_cox(const SurvivalDataset& ds, int arm, Role role, const ModelFormula& formula,
               const FitControls& controls) {
  const auto subjects = ds.subjects_in_arm(arm);
  if (subjects.empty()) fail(ErrorKind::NoSubjectsInArm, fmt::format("no subjects in arm {}", arm));
  const DesignMatrix x = build_design(ds, formula, subjects);
  std::vector<double> time(subjects.size());
  std::vector<int> status(subjects.size());
  for (std::size_t r = 0; r < subjects.size(); ++r) {
    time[r] = ds.time(subjects[r]);
    status[r] = role_status(ds, subjects[r], role);
  }
  PartialLikelihood pl(time, status, x);
  if (pl.num_events() == 0)
    fail(ErrorKind::NoEventsInRole, fmt::format("no {} events in arm {}", to_string(role), arm));

  auto nr = maximize_partial_likelihood(pl, Eigen::VectorXd::Zero(x.cols()), controls);
  CoxFit fit;
  fit.arm = arm;
  fit.role = role;
  fit.formula = formula.with_role(role);
  fit.baseline = pl.breslow(nr.beta);
  fit.coefficients = std::move(nr.beta);
  fit.convergence = nr.info;
  return fit;
}

double predict_event_survival(const CoxFit& fit, std::span<const double> v, double t) {
  return std::exp(-fit.baseline.cumulative_at(t) * std::exp(fit.linear_predictor(v)));
}

double predict_censoring_survival(const CoxFit& fit, std::span<const double> v, double t) {
  return predict_event_survival(fit, v, t);
}

std::vector<std::pair<double, double>> censoring_hazard_increments(const CoxFit& fit,
                                                                   std::span<const double> v) {
  const double r = std::exp(fit.linear_predictor(v));
  std::vector<std::pair<double, double>> out;
  out.reserve(fit.baseline.size());
  for (std::size_t k = 0; k < fit.baseline.size(); ++k)
    out.emplace_back(fit.baseline.times[k], fit.baseline.increments[k] * r);
  return out;
}

}  // namespace drcrt
