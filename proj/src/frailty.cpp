#include "drcrt/frailty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "drcrt/error.hpp"

namespace drcrt {

double kendall_tau(double theta) { return 1.0 / (2.0 * theta + 1.0); }
double theta_from_kendall(double tau) { return (1.0 / tau - 1.0) / 2.0; }

double gamma_laplace(double theta, double cumhaz) { return std::exp(-theta * std::log1p(cumhaz / theta)); }

double FrailtyFit::linear_predictor(std::span<const double> v) const {
  double eta = 0.0;
  for (Eigen::Index k = 0; k < coefficients.size(); ++k) eta += coefficients(k) * v[static_cast<std::size_t>(k)];
  return eta;
}

double FrailtyFit::kendall_tau() const { return drcrt::kendall_tau(theta); }

namespace {

struct ArmSubset {
  std::vector<double> time;
  std::vector<int> status;
  DesignMatrix x;
  std::vector<std::size_t> cluster;  // 0..num_clusters-1 within the subset
  std::vector<int> events;           // per cluster
  std::size_t num_clusters = 0;
};

ArmSubset make_subset(const SurvivalDataset& ds, int arm, Role role, const ModelFormula& formula) {
  ArmSubset sub;
  const auto subjects = ds.subjects_in_arm(arm);
  if (subjects.empty()) fail(ErrorKind::NoSubjectsInArm, fmt::format("no subjects in arm {}", arm));
  sub.x = build_design(ds, formula, subjects);
  std::size_t last = static_cast<std::size_t>(-1);
  for (std::size_t s : subjects) {
    if (ds.cluster_of(s) != last) {
      last = ds.cluster_of(s);
      sub.events.push_back(0);
    }
    sub.time.push_back(ds.time(s));
    sub.status.push_back(role_status(ds, s, role));
    sub.cluster.push_back(sub.events.size() - 1);
    sub.events.back() += sub.status.back();
  }
  sub.num_clusters = sub.events.size();
  return sub;
}

// Per-cluster cumulative hazard Lambda_i = sum_j Lambda0(U_ij) exp(beta'x_ij).
std::vector<double> cluster_cumhaz(const ArmSubset& sub, const Eigen::VectorXd& beta, const BaselineHazard& bh) {
  std::vector<double> lam(sub.num_clusters, 0.0);
  Eigen::VectorXd eta = beta.size() ? Eigen::VectorXd(sub.x * beta) : Eigen::VectorXd::Zero(sub.x.rows());
  for (std::size_t j = 0; j < sub.time.size(); ++j)
    lam[sub.cluster[j]] += bh.cumulative_at(sub.time[j]) * std::exp(eta(static_cast<Eigen::Index>(j)));
  return lam;
}

// Frailty part of the marginal log-likelihood,
//   sum_i log{theta^theta Gamma(theta+d_i) / (Gamma(theta) (theta+Lambda_i)^(theta+d_i))}
//     = sum_i [ sum_{k<d_i} log1p(k/theta) - (theta + d_i) log1p(Lambda_i/theta) ],
// the second form staying accurate for very large theta.
class ThetaObjective {
 public:
  ThetaObjective(const std::vector<int>& events, std::vector<double> lam) : lam_(std::move(lam)), events_(events) {
    int dmax = 0;
    for (int d : events) dmax = std::max(dmax, d);
    above_.assign(static_cast<std::size_t>(dmax), 0);
    for (int d : events)
      for (int k = 0; k < d; ++k) ++above_[static_cast<std::size_t>(k)];
  }

  double operator()(double theta) const {
    double g = 0.0;
    for (std::size_t k = 1; k < above_.size(); ++k) g += above_[k] * std::log1p(static_cast<double>(k) / theta);
    for (std::size_t i = 0; i < lam_.size(); ++i) g -= (theta + events_[i]) * std::log1p(lam_[i] / theta);
    return g;
  }

 private:
  std::vector<double> lam_;
  const std::vector<int>& events_;
  std::vector<int> above_;  // above_[k] = #clusters with d_i > k
};

double maximize_log_theta(const ThetaObjective& f, double lo, double hi) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = f(std::exp(c)), fd = f(std::exp(d));
  while (b - a > 1e-10) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(std::exp(d));
    }
  }
  double best = 0.5 * (a + b);
  double fbest = f(std::exp(best));
  for (double edge : {lo, hi}) {
    const double fe = f(std::exp(edge));
    if (fe > fbest) {
      fbest = fe;
      best = edge;
    }
  }
  return best;
}

double event_part(const ArmSubset& sub, const Eigen::VectorXd& beta, const BaselineHazard& bh) {
  double ll = 0.0;
  for (std::size_t j = 0; j < sub.time.size(); ++j) {
    if (!sub.status[j]) continue;
    const auto it = std::lower_bound(bh.times.begin(), bh.times.end(), sub.time[j]);
    if (it == bh.times.end() || *it != sub.time[j]) return -std::numeric_limits<double>::infinity();
    const double inc = bh.increments[static_cast<std::size_t>(it - bh.times.begin())];
    double eta = 0.0;
    for (Eigen::Index k = 0; k < beta.size(); ++k) eta += beta(k) * sub.x(static_cast<Eigen::Index>(j), k);
    ll += std::log(inc) + eta;
  }
  return ll;
}

double frailty_part(const ArmSubset& sub, const std::vector<double>& lam, double theta) {
  return ThetaObjective(sub.events, lam)(theta);
}

}  // namespace

double frailty_log_likelihood(const SurvivalDataset& ds, int arm, Role role, const ModelFormula& formula,
                              const Eigen::VectorXd& beta, const BaselineHazard& baseline, double theta) {
  const ArmSubset sub = make_subset(ds, arm, role, formula);
  return event_part(sub, beta, baseline) + frailty_part(sub, cluster_cumhaz(sub, beta, baseline), theta);
}

FrailtyFit fit_frailty(const SurvivalDataset& ds, int arm, Role role, const ModelFormula& formula,
                       const FitControls& controls) {
  const ArmSubset sub = make_subset(ds, arm, role, formula);
  int total_events = 0;
  for (int d : sub.events) total_events += d;
  if (total_events == 0) fail(ErrorKind::NoEventsInRole, fmt::format("no {} events in arm {}", to_string(role), arm));
  if (sub.num_clusters < 2)
    fail(ErrorKind::InvalidData, fmt::format("frailty fit needs at least 2 clusters in arm {}", arm));

  PartialLikelihood pl(sub.time, sub.status, sub.x);
  auto nr = maximize_partial_likelihood(pl, Eigen::VectorXd::Zero(sub.x.cols()), controls);
  const double lo = std::log(controls.theta_min), hi = std::log(controls.theta_max);

  const BaselineHazard initial = pl.breslow(nr.beta);
  const std::size_t p = static_cast<std::size_t>(sub.x.cols());
  const std::size_t k_inc = initial.size();
  // EM state (beta, log baseline increments, log theta) as one vector.
  auto pack = [&](const Eigen::VectorXd& beta, const BaselineHazard& bh, double log_theta) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(p + k_inc + 1));
    x.head(static_cast<Eigen::Index>(p)) = beta;
    for (std::size_t k = 0; k < k_inc; ++k) x(static_cast<Eigen::Index>(p + k)) = std::log(bh.increments[k]);
    x(static_cast<Eigen::Index>(p + k_inc)) = log_theta;
    return x;
  };
  auto baseline_of = [&](const Eigen::VectorXd& x) {
    BaselineHazard bh;
    bh.times = initial.times;
    bh.increments.resize(k_inc);
    bh.cumulative.resize(k_inc);
    double cum = 0.0;
    for (std::size_t k = 0; k < k_inc; ++k) {
      bh.increments[k] = std::exp(x(static_cast<Eigen::Index>(p + k)));
      cum += bh.increments[k];
      bh.cumulative[k] = cum;
    }
    return bh;
  };
  auto beta_of = [&](const Eigen::VectorXd& x) { return Eigen::VectorXd(x.head(static_cast<Eigen::Index>(p))); };
  auto log_theta_of = [&](const Eigen::VectorXd& x) { return x(static_cast<Eigen::Index>(p + k_inc)); };

  // One EM update: posterior frailty means as offsets, offset Cox fit and
  // Breslow baseline (B = 1 scale), then theta from the marginal likelihood.
  std::vector<double> offset(sub.time.size());
  auto em_step = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd beta = beta_of(x);
    const double theta = std::exp(log_theta_of(x));
    const auto lam = cluster_cumhaz(sub, beta, baseline_of(x));
    for (std::size_t j = 0; j < offset.size(); ++j) {
      const std::size_t i = sub.cluster[j];
      offset[j] = std::log((theta + sub.events[i]) / (theta + lam[i]));
    }
    pl.set_offset(offset);
    nr = maximize_partial_likelihood(pl, beta, controls);
    const BaselineHazard bh = pl.breslow(nr.beta);
    const double log_theta =
        maximize_log_theta(ThetaObjective(sub.events, cluster_cumhaz(sub, nr.beta, bh)), lo, hi);
    return pack(nr.beta, bh, log_theta);
  };
  auto loglik = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd beta = beta_of(x);
    const BaselineHazard bh = baseline_of(x);
    return event_part(sub, beta, bh) + frailty_part(sub, cluster_cumhaz(sub, beta, bh), std::exp(log_theta_of(x)));
  };
  auto change = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double db = p ? (beta_of(a) - beta_of(b)).cwiseAbs().maxCoeff() : 0.0;
    return std::max(db, std::abs(log_theta_of(a) - log_theta_of(b)));
  };

  // SQUAREM-accelerated fixed-point iteration; each cycle starts with a plain
  // EM step whose parameter change is the convergence criterion.
  Eigen::VectorXd x = pack(nr.beta, initial, std::log(controls.theta_init));
  FrailtyFit fit;
  bool converged = false;
  int iter = 0;
  while (iter < controls.em_max_iterations) {
    ++iter;
    const Eigen::VectorXd x1 = em_step(x);
    if (change(x1, x) <= controls.em_tol) {
      x = x1;
      converged = true;
      break;
    }
    const Eigen::VectorXd x2 = em_step(x1);
    const Eigen::VectorXd r = x1 - x;
    const Eigen::VectorXd v = x2 - 2.0 * x1 + x;
    const double vn = v.norm();
    double step = vn > 0.0 ? -r.norm() / vn : -1.0;
    if (!(step < -1.0)) {
      x = x2;
      continue;
    }
    step = std::max(step, -1e3);
    Eigen::VectorXd xn = x - 2.0 * step * r + step * step * v;
    xn(static_cast<Eigen::Index>(p + k_inc)) = std::clamp(log_theta_of(xn), lo, hi);
    try {
      const Eigen::VectorXd x3 = em_step(xn);
      const double l3 = loglik(x3);
      x = (std::isfinite(l3) && l3 >= loglik(x2)) ? x3 : x2;
    } catch (const Error&) {
      x = x2;
    }
  }
  Eigen::VectorXd beta = beta_of(x);
  BaselineHazard bh = baseline_of(x);
  double log_theta = log_theta_of(x);

  fit.theta_boundary = log_theta >= hi - 1e-3;
  if (!converged && !fit.theta_boundary)
    fail(ErrorKind::NonConvergence,
         fmt::format("frailty EM did not converge in {} iterations (arm {}, {})", iter, arm, to_string(role)));

  fit.arm = arm;
  fit.role = role;
  fit.formula = formula.with_role(role);
  fit.coefficients = beta;
  fit.baseline = std::move(bh);
  fit.theta = std::exp(log_theta);
  fit.em_iterations = iter;
  fit.convergence = nr.info;
  fit.log_likelihood =
      event_part(sub, beta, fit.baseline) + frailty_part(sub, cluster_cumhaz(sub, beta, fit.baseline), fit.theta);
  return fit;
}

double conditional_frailty_mean(const FrailtyFit& fit, std::span<const double> v, double t) {
  const double lam = fit.baseline.cumulative_at(t) * std::exp(fit.linear_predictor(v));
  return fit.theta / (fit.theta + lam);
}

double marginal_event_survival(const FrailtyFit& fit, std::span<const double> v, double t) {
  return gamma_laplace(fit.theta, fit.baseline.cumulative_at(t) * std::exp(fit.linear_predictor(v)));
}

double marginal_censoring_survival(const FrailtyFit& fit, std::span<const double> v, double t) {
  return marginal_event_survival(fit, v, t);
}

std::vector<std::pair<double, double>> marginal_censoring_hazard_increments(const FrailtyFit& fit,
                                                                            std::span<const double> v) {
  const double r = std::exp(fit.linear_predictor(v));
  std::vector<std::pair<double, double>> out;
  out.reserve(fit.baseline.size());
  double left = 0.0;
  for (std::size_t k = 0; k < fit.baseline.size(); ++k) {
    const double mean_left = fit.theta / (fit.theta + left * r);
    out.emplace_back(fit.baseline.times[k], mean_left * fit.baseline.increments[k] * r);
    left = fit.baseline.cumulative[k];
  }
  return out;
}

}  // namespace drcrt
