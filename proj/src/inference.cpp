#include "drcrt/inference.hpp"

#include <cmath>

#include <fmt/format.h>

#include "drcrt/error.hpp"
#include "drcrt/parallel.hpp"
#include "drcrt/tdist.hpp"

namespace drcrt {

std::vector<double> Replicates::column(std::size_t k) const {
  std::vector<double> out(clusters);
  for (std::size_t g = 0; g < clusters; ++g) out[g] = at(g, k);
  return out;
}

namespace {

void check_feasible(const SurvivalDataset& ds, const LeaveOneOutRequirements& req) {
  // Per-arm totals, then each cluster's share of them.
  std::size_t clusters[2] = {0, 0}, events[2] = {0, 0}, censored[2] = {0, 0};
  std::vector<std::size_t> ev(ds.num_clusters(), 0), ce(ds.num_clusters(), 0);
  for (std::size_t i = 0; i < ds.num_clusters(); ++i) {
    const auto& c = ds.cluster(i);
    ++clusters[c.arm];
    for (std::size_t s = c.first; s < c.first + c.size; ++s) (ds.event(s) ? ev[i] : ce[i])++;
    events[c.arm] += ev[i];
    censored[c.arm] += ce[i];
  }
  for (std::size_t i = 0; i < ds.num_clusters(); ++i) {
    const auto& c = ds.cluster(i);
    const int a = c.arm;
    std::string why;
    if (clusters[a] - 1 < std::max<std::size_t>(1, req.min_clusters_per_arm))
      why = fmt::format("arm {} would keep {} cluster(s)", a, clusters[a] - 1);
    else if (events[a] == ev[i])
      why = fmt::format("arm {} would have no events", a);
    else if (req.censoring_events && censored[a] == ce[i])
      why = fmt::format("arm {} would have no censored subjects", a);
    if (!why.empty())
      fail(ErrorKind::LeaveOneOutInfeasible, fmt::format("leaving out cluster '{}' is infeasible: {}", c.id, why));
  }
}

bool is_feasibility_error(ErrorKind kind) {
  return kind == ErrorKind::NoEventsInRole || kind == ErrorKind::NoSubjectsInArm ||
         kind == ErrorKind::SingleArmDataset;
}

}  // namespace

Replicates leave_one_cluster_out(const SurvivalDataset& ds, const TargetPipeline& pipeline,
                                 const LeaveOneOutRequirements& requirements, unsigned threads) {
  const std::size_t m = ds.num_clusters();
  if (m < 3) fail(ErrorKind::InvalidConfig, fmt::format("jackknife needs at least 3 clusters, got {}", m));
  check_feasible(ds, requirements);

  DatasetOptions loo_options;
  loo_options.require_events_per_arm = true;
  std::vector<std::vector<double>> rows(m);
  parallel_for(m, threads, [&](std::size_t g) {
    try {
      rows[g] = pipeline(ds.without_cluster(g, loo_options));
    } catch (const Error& e) {
      if (is_feasibility_error(e.kind()) || e.kind() == ErrorKind::InvalidData)
        fail(ErrorKind::LeaveOneOutInfeasible,
             fmt::format("leaving out cluster '{}' is infeasible: {}", ds.cluster(g).id, e.what()));
      throw Error(e.kind(), fmt::format("{} (replicate without cluster '{}')", e.what(), ds.cluster(g).id));
    }
  });

  Replicates rep;
  rep.clusters = m;
  rep.targets = rows.empty() ? 0 : rows[0].size();
  rep.values.reserve(m * rep.targets);
  for (const auto& r : rows) {
    if (r.size() != rep.targets) fail(ErrorKind::InvalidConfig, "replicates returned different target counts");
    rep.values.insert(rep.values.end(), r.begin(), r.end());
  }
  return rep;
}

double jackknife_variance(std::span<const double> x) {
  const double m = static_cast<double>(x.size());
  if (x.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= m;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return (m - 1.0) / m * ss;
}

Eigen::Matrix2d covariance_matrix(std::span<const double> arm1, std::span<const double> arm0) {
  if (arm1.size() != arm0.size()) fail(ErrorKind::InvalidConfig, "replicate counts differ between arms");
  const double m = static_cast<double>(arm1.size());
  double mean1 = 0.0, mean0 = 0.0;
  for (std::size_t g = 0; g < arm1.size(); ++g) {
    mean1 += arm1[g];
    mean0 += arm0[g];
  }
  mean1 /= m;
  mean0 /= m;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (std::size_t g = 0; g < arm1.size(); ++g) {
    const double d1 = arm1[g] - mean1, d0 = arm0[g] - mean0;
    cov(0, 0) += d1 * d1;
    cov(0, 1) += d1 * d0;
    cov(1, 1) += d0 * d0;
  }
  cov(1, 0) = cov(0, 1);
  return (m - 1.0) / m * cov;
}

double difference_variance(const Eigen::Matrix2d& cov) {
  return std::max(0.0, cov(0, 0) + cov(1, 1) - 2.0 * cov(0, 1));
}

Interval t_interval(double estimate, double se, double alpha, double df) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::InvalidConfig, fmt::format("alpha must be in (0,1), got {}", alpha));
  const double q = student_t_quantile(1.0 - alpha / 2.0, df);
  return {estimate, se, estimate - q * se, estimate + q * se};
}

}  // namespace drcrt
