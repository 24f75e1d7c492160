#include "drcrt/aipw.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "drcrt/error.hpp"
#include "drcrt/simd.hpp"

namespace drcrt {

void PropensitySpec::validate() const {
  if (!(pi1 > 0.0 && pi1 < 1.0))
    fail(ErrorKind::InvalidConfig, fmt::format("randomization probability must lie in (0,1), got {}", pi1));
}

namespace {

double floored(double k, const AipwOptions& options, std::size_t* count) {
  if (k >= options.censoring_floor) return k;
  if (options.floor_policy == FloorPolicy::Error)
    fail(ErrorKind::CensoringSurvivalUnderflow,
         fmt::format("censoring survival {:.3g} below floor {:.3g}", k, options.censoring_floor));
  if (count) ++*count;
  return options.censoring_floor;
}

std::span<const double> row_span(const DesignMatrix& x, std::size_t s) {
  return {x.data() + s * static_cast<std::size_t>(x.cols()), static_cast<std::size_t>(x.cols())};
}

}  // namespace

double subject_contribution(const SubjectObservation& obs, const ConditionalSurvivalOracle& oracle,
                            const PropensitySpec& pi, double t, const AipwOptions& options, std::size_t* floor_count) {
  const int a = oracle.arm();
  const double p = pi.pi(a);
  const double s_t = oracle.event_survival(obs.v_outcome, t);
  if (obs.arm != a) return s_t;

  const double k_t = oracle.censoring_survival(obs.v_censoring, t);
  const double term1 = obs.time >= t ? 1.0 / (p * floored(k_t, options, floor_count)) : 0.0;
  const double term2 = (1.0 - p) / p * s_t;

  const double upper = std::min(t, obs.time);
  double integral = 0.0;
  for (const auto& [u, dh] : oracle.censoring_hazard_increments(obs.v_censoring)) {
    if (u > upper) break;
    const double k_u = floored(oracle.censoring_survival(obs.v_censoring, u), options, floor_count);
    integral -= dh / (k_u * oracle.event_survival(obs.v_outcome, u));
  }
  if (obs.event == 0 && obs.time <= t) {
    const double k_u = floored(oracle.censoring_survival(obs.v_censoring, obs.time), options, floor_count);
    integral += 1.0 / (k_u * oracle.event_survival(obs.v_outcome, obs.time));
  }
  return term1 - term2 + s_t * integral / p;
}

ArmEstimate estimate_arm(const SurvivalDataset& ds, const ConditionalSurvivalOracle& oracle,
                         const PropensitySpec& pi, std::span<const double> grid, const AipwOptions& options) {
  pi.validate();
  if (grid.empty() || grid.front() != 0.0) fail(ErrorKind::InvalidConfig, "estimation grid must start at 0");
  for (std::size_t k = 1; k < grid.size(); ++k)
    if (!(grid[k] > grid[k - 1])) fail(ErrorKind::InvalidConfig, "estimation grid must be strictly increasing");

  const int a = oracle.arm();
  const double p = pi.pi(a);
  const HazardModel& om = oracle.outcome();
  const HazardModel& cm = oracle.censoring();
  const std::size_t g = grid.size();
  const double t_max = grid.back();
  const double max_phi = -std::log(options.censoring_floor);
  const auto& kern = simd::kernels();

  const DesignMatrix xo = build_design(ds, om.formula);
  const DesignMatrix xc = build_design(ds, cm.formula);

  std::vector<double> go(g), gc(g);
  for (std::size_t k = 0; k < g; ++k) {
    go[k] = om.cumhaz_at(grid[k]);
    gc[k] = cm.cumhaz_at(grid[k]);
  }
  // Censoring jumps up to the last grid time, with both cumulative hazards there.
  std::vector<double> ju, jdh, jhc, jhcl, jho;
  for (std::size_t j = 0; j < cm.baseline.size() && cm.baseline.times[j] <= t_max; ++j) {
    ju.push_back(cm.baseline.times[j]);
    jdh.push_back(cm.baseline.increments[j]);
    jhc.push_back(cm.survival_cumhaz[j]);
    jhcl.push_back(j == 0 ? 0.0 : cm.survival_cumhaz[j - 1]);
    jho.push_back(om.cumhaz_at(ju.back()));
  }

  ArmEstimate est;
  est.arm = a;
  est.grid.assign(grid.begin(), grid.end());
  est.curve = {std::vector<double>(g, 0.0), std::vector<double>(g, 0.0)};
  if (options.keep_subject_contributions) est.subject.assign(ds.num_subjects() * g, 0.0);

  std::vector<double> s_grid(g), k_grid(g), contrib(g), cluster_sum(g), w(ju.size());
  for (std::size_t i = 0; i < ds.num_clusters(); ++i) {
    const auto& cl = ds.cluster(i);
    std::fill(cluster_sum.begin(), cluster_sum.end(), 0.0);
    for (std::size_t s = cl.first; s < cl.first + cl.size; ++s) {
      const double ro = om.risk_score(row_span(xo, s));
      kern.survival(go.data(), g, ro, om.link, s_grid.data());
      if (cl.arm != a) {
        std::copy(s_grid.begin(), s_grid.end(), contrib.begin());
      } else {
        const double u_obs = ds.time(s);
        const int delta = ds.event(s);
        const double rc = cm.risk_score(row_span(xc, s));
        kern.survival(gc.data(), g, rc, cm.link, k_grid.data());

        const std::size_t n_jumps = static_cast<std::size_t>(
            std::upper_bound(ju.begin(), ju.end(), std::min(u_obs, t_max)) - ju.begin());
        const std::size_t clamped = kern.augmentation(jhcl.data(), jhc.data(), jho.data(), jdh.data(), n_jumps, rc,
                                                      cm.link, ro, om.link, max_phi, w.data());
        if (clamped) {
          if (options.floor_policy == FloorPolicy::Error)
            fail(ErrorKind::CensoringSurvivalUnderflow,
                 fmt::format("censoring survival below floor {:.3g}", options.censoring_floor));
          est.floored += clamped;
        }
        double own = 0.0;
        if (delta == 0 && u_obs <= t_max) {
          const double k_u = floored(cm.survival(u_obs, rc), options, &est.floored);
          own = 1.0 / (k_u * om.survival(u_obs, ro));
        }

        double integral = 0.0;
        std::size_t j = 0;
        for (std::size_t k = 0; k < g; ++k) {
          while (j < n_jumps && ju[j] <= grid[k]) integral -= w[j++];
          const double total = (delta == 0 && u_obs <= grid[k]) ? integral + own : integral;
          const double term1 = u_obs >= grid[k] ? 1.0 / (p * floored(k_grid[k], options, &est.floored)) : 0.0;
          contrib[k] = term1 - (1.0 - p) / p * s_grid[k] + s_grid[k] * total / p;
        }
      }
      for (std::size_t k = 0; k < g; ++k) cluster_sum[k] += contrib[k];
      if (options.keep_subject_contributions) std::copy(contrib.begin(), contrib.end(), est.subject.begin() + s * g);
    }
    for (std::size_t k = 0; k < g; ++k) {
      est.curve[0][k] += cluster_sum[k] / static_cast<double>(cl.size);
      est.curve[1][k] += cluster_sum[k];
    }
  }
  for (std::size_t k = 0; k < g; ++k) {
    est.curve[0][k] /= static_cast<double>(ds.num_clusters());
    est.curve[1][k] /= static_cast<double>(ds.num_subjects());
  }
  return est;
}

std::array<SurvivalCurve, 2> estimate_survival(const SurvivalDataset& ds,
                                              const std::array<const ConditionalSurvivalOracle*, 2>& oracles,
                                              const PropensitySpec& pi, Level level, std::span<const double> grid,
                                              const AipwOptions& options) {
  std::array<SurvivalCurve, 2> out;
  for (int a = 0; a < 2; ++a) {
    const auto* oracle = oracles[static_cast<std::size_t>(a)];
    if (oracle->arm() != a)
      fail(ErrorKind::OracleArmMismatch, fmt::format("oracle for arm {} supplied in slot {}", oracle->arm(), a));
    auto est = estimate_arm(ds, *oracle, pi, grid, options);
    out[static_cast<std::size_t>(a)].times = est.grid;
    out[static_cast<std::size_t>(a)].values = std::move(est.curve[static_cast<std::size_t>(level)]);
  }
  return out;
}

std::array<std::vector<double>, 2> aggregate_subjects(const SurvivalDataset& ds, std::span<const double> values,
                                                      std::size_t columns) {
  std::array<std::vector<double>, 2> out{std::vector<double>(columns, 0.0), std::vector<double>(columns, 0.0)};
  std::vector<double> cluster_sum(columns);
  for (std::size_t i = 0; i < ds.num_clusters(); ++i) {
    const auto& cl = ds.cluster(i);
    std::fill(cluster_sum.begin(), cluster_sum.end(), 0.0);
    for (std::size_t s = cl.first; s < cl.first + cl.size; ++s)
      for (std::size_t k = 0; k < columns; ++k) cluster_sum[k] += values[s * columns + k];
    for (std::size_t k = 0; k < columns; ++k) {
      out[0][k] += cluster_sum[k] / static_cast<double>(cl.size);
      out[1][k] += cluster_sum[k];
    }
  }
  for (std::size_t k = 0; k < columns; ++k) {
    out[0][k] /= static_cast<double>(ds.num_clusters());
    out[1][k] /= static_cast<double>(ds.num_subjects());
  }
  return out;
}

std::vector<double> subject_rmst(std::span<const double> grid, std::span<const double> values, double tau) {
  const std::size_t g = grid.size();
  const std::size_t n = g ? values.size() / g : 0;
  std::vector<double> out(n);
  for (std::size_t s = 0; s < n; ++s) out[s] = trapezoid(grid, values.subspan(s * g, g), tau);
  return out;
}

double effect_rmst(const SurvivalDataset& ds, std::span<const double> rmst_arm1, std::span<const double> rmst_arm0,
                   EffectScale scale, Level level) {
  const std::size_t n = ds.num_subjects();
  if (scale == EffectScale::Difference) {
    std::vector<double> diff(n);
    for (std::size_t s = 0; s < n; ++s) diff[s] = rmst_arm1[s] - rmst_arm0[s];
    return aggregate_subjects(ds, diff, 1)[static_cast<std::size_t>(level)][0];
  }
  const double m1 = aggregate_subjects(ds, rmst_arm1, 1)[static_cast<std::size_t>(level)][0];
  const double m0 = aggregate_subjects(ds, rmst_arm0, 1)[static_cast<std::size_t>(level)][0];
  return apply_scale(scale, m1, m0);
}

}  // namespace drcrt
