#include "drcrt/nonparam.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "drcrt/error.hpp"
#include "drcrt/oracle.hpp"
#include "drcrt/simd.hpp"

namespace drcrt {

ProductLimit weighted_product_limit(std::span<const double> time, std::span<const int> status,
                                    std::span<const double> weight) {
  const std::size_t n = time.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return time[a] < time[b]; });

  struct Group {
    double t, dead, leaving;
  };
  std::vector<Group> groups;
  for (std::size_t r = 0; r < n;) {
    Group grp{time[order[r]], 0.0, 0.0};
    for (; r < n && time[order[r]] == grp.t; ++r) {
      const std::size_t s = order[r];
      grp.leaving += weight[s];
      if (status[s]) grp.dead += weight[s];
    }
    groups.push_back(grp);
  }
  // Risk sets as suffix sums, so a final group that fails entirely gives hazard exactly 1.
  std::vector<double> at_risk(groups.size());
  double acc = 0.0;
  for (std::size_t k = groups.size(); k-- > 0;) at_risk[k] = acc += groups[k].leaving;

  ProductLimit pl;
  double surv = 1.0;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    if (groups[k].dead <= 0.0) continue;
    const double h = std::min(1.0, groups[k].dead / at_risk[k]);
    surv *= 1.0 - h;
    pl.times.push_back(groups[k].t);
    pl.hazard.push_back(h);
    pl.survival.push_back(surv);
  }
  return pl;
}

SurvivalCurve weighted_km(const SurvivalDataset& ds, int arm, KmWeighting weighting) {
  const auto subjects = ds.subjects_in_arm(arm);
  if (subjects.empty()) fail(ErrorKind::NoSubjectsInArm, fmt::format("no subjects in arm {}", arm));
  std::vector<double> time, weight;
  std::vector<int> status;
  for (std::size_t s : subjects) {
    time.push_back(ds.time(s));
    status.push_back(ds.event(s));
    weight.push_back(weighting == KmWeighting::ClusterInverseSize ? 1.0 / static_cast<double>(ds.cluster_size_of(s))
                                                                  : 1.0);
  }
  const ProductLimit pl = weighted_product_limit(time, status, weight);
  SurvivalCurve curve;
  curve.times.push_back(0.0);
  curve.values.push_back(1.0);
  for (std::size_t k = 0; k < pl.times.size(); ++k) {
    if (pl.times[k] == 0.0) {
      curve.values[0] = pl.survival[k];
      continue;
    }
    curve.times.push_back(pl.times[k]);
    curve.values.push_back(pl.survival[k]);
  }
  return curve;
}

std::array<std::vector<double>, 2> standardize_outcome_curve(const HazardModel& outcome, const SurvivalDataset& ds,
                                                             std::span<const double> grid) {
  const std::size_t g = grid.size();
  std::vector<double> cum(g);
  for (std::size_t k = 0; k < g; ++k) cum[k] = outcome.cumhaz_at(grid[k]);
  const DesignMatrix x = build_design(ds, outcome.formula);
  const auto& kern = simd::kernels();

  std::array<std::vector<double>, 2> out{std::vector<double>(g, 0.0), std::vector<double>(g, 0.0)};
  std::vector<double> cluster_sum(g), pred(g);
  for (std::size_t i = 0; i < ds.num_clusters(); ++i) {
    const auto& c = ds.cluster(i);
    std::fill(cluster_sum.begin(), cluster_sum.end(), 0.0);
    for (std::size_t s = c.first; s < c.first + c.size; ++s) {
      const auto row = x.row(static_cast<Eigen::Index>(s));
      const double r = outcome.risk_score({row.data(), static_cast<std::size_t>(row.size())});
      kern.survival(cum.data(), g, r, outcome.link, pred.data());
      for (std::size_t k = 0; k < g; ++k) cluster_sum[k] += pred[k];
    }
    for (std::size_t k = 0; k < g; ++k) {
      out[0][k] += cluster_sum[k] / static_cast<double>(c.size);
      out[1][k] += cluster_sum[k];
    }
  }
  for (std::size_t k = 0; k < g; ++k) {
    out[0][k] /= static_cast<double>(ds.num_clusters());
    out[1][k] /= static_cast<double>(ds.num_subjects());
  }
  return out;
}

double standardize_outcome_model(const HazardModel& outcome, const SurvivalDataset& ds, Level level, double t) {
  const double grid[1] = {t};
  return standardize_outcome_curve(outcome, ds, grid)[static_cast<std::size_t>(level)][0];
}

}  // namespace drcrt
