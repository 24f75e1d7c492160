#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "drcrt/data.hpp"

namespace drcrt {

/// Row g holds the targets recomputed without cluster g.
struct Replicates {
  std::size_t clusters = 0;
  std::size_t targets = 0;
  std::vector<double> values;  // clusters x targets, row-major

  double at(std::size_t g, std::size_t k) const { return values[g * targets + k]; }
  std::vector<double> column(std::size_t k) const;
};

using TargetPipeline = std::function<std::vector<double>(const SurvivalDataset&)>;

struct LeaveOneOutRequirements {
  bool censoring_events = true;       // censoring models need Delta = 0 in each arm
  std::size_t min_clusters_per_arm = 1;
};

/// Refits the whole pipeline once per left-out cluster. Throws
/// LeaveOneOutInfeasible naming the cluster whose removal empties an arm or
/// removes every event of a role; errors of the refit itself propagate.
Replicates leave_one_cluster_out(const SurvivalDataset& ds, const TargetPipeline& pipeline,
                                 const LeaveOneOutRequirements& requirements = {}, unsigned threads = 1);

/// ((M-1)/M) sum_g (x_g - xbar)^2, centred at the replicate mean.
double jackknife_variance(std::span<const double> replicates);

/// 2x2 jackknife covariance of paired arm replicates (arm 1, arm 0).
Eigen::Matrix2d covariance_matrix(std::span<const double> arm1, std::span<const double> arm0);

/// Variance of S1 - S0 from the arm covariance: [1, -1] S [1, -1]'.
double difference_variance(const Eigen::Matrix2d& cov);

struct Interval {
  double estimate = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// estimate +/- t_{1-alpha/2, df} se.
Interval t_interval(double estimate, double se, double alpha, double df);

inline int jackknife_df(std::size_t clusters) { return static_cast<int>(clusters) - 2; }

}  // namespace drcrt
