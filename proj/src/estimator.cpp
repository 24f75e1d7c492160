#include "drcrt/estimator.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "drcrt/error.hpp"
#include "drcrt/nonparam.hpp"

namespace drcrt {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Marginal: return "marginal";
    case Method::Frailty: return "frailty";
    case Method::KaplanMeier: return "km";
    case Method::OutcomeRegression: return "outcome_regression";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "marginal") return Method::Marginal;
  if (name == "frailty") return Method::Frailty;
  if (name == "km") return Method::KaplanMeier;
  if (name == "outcome_regression" || name == "or") return Method::OutcomeRegression;
  fail(ErrorKind::InvalidConfig, fmt::format("unknown method '{}'", name));
}

std::string_view to_string(Estimand estimand) { return estimand == Estimand::SPCE ? "SPCE" : "RMST"; }

Estimand parse_estimand(std::string_view name) {
  if (name == "SPCE" || name == "spce") return Estimand::SPCE;
  if (name == "RMST" || name == "rmst") return Estimand::RMST;
  fail(ErrorKind::InvalidConfig, fmt::format("unknown estimand '{}'", name));
}

std::vector<double> PointEstimates::target_vector() const {
  std::vector<double> out;
  for (std::size_t lv = 0; lv < 2; ++lv) {
    for (std::size_t k = 0; k < times.size(); ++k) {
      out.push_back(survival[lv][1][k]);
      out.push_back(survival[lv][0][k]);
    }
    for (std::size_t k = 0; k < taus.size(); ++k) {
      out.push_back(rmst[lv][1][k]);
      out.push_back(rmst[lv][0][k]);
    }
  }
  return out;
}

std::vector<double> build_grid(const SurvivalDataset& ds, std::span<const double> times, std::span<const double> taus,
                               bool dense) {
  std::vector<double> grid{0.0};
  double t_max = 0.0;
  for (double t : times) {
    if (!(t >= 0.0) || !std::isfinite(t)) fail(ErrorKind::InvalidConfig, fmt::format("invalid report time {}", t));
    grid.push_back(t);
    t_max = std::max(t_max, t);
  }
  for (double t : taus) {
    if (!(t > 0.0) || !std::isfinite(t)) fail(ErrorKind::InvalidConfig, fmt::format("invalid RMST horizon {}", t));
    grid.push_back(t);
    t_max = std::max(t_max, t);
  }
  if (grid.size() == 1) fail(ErrorKind::InvalidConfig, "no report times or RMST horizons requested");
  if (dense)
    for (std::size_t s = 0; s < ds.num_subjects(); ++s)
      if (ds.event(s) && ds.time(s) <= t_max) grid.push_back(ds.time(s));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

const HazardModel& ModelCache::get(const SurvivalDataset& ds, int arm, Role role, Backend backend,
                                   const ModelFormula& formula, const FitControls& controls) {
  auto key = std::make_tuple(arm, static_cast<int>(role), static_cast<int>(backend), formula.to_string());
  auto it = models_.find(key);
  if (it == models_.end())
    it = models_.emplace(key, std::make_unique<HazardModel>(fit_hazard_model(ds, arm, role, backend, formula, controls)))
             .first;
  return *it->second;
}

namespace {

std::size_t index_of(const std::vector<double>& grid, double t) {
  return static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), t) - grid.begin());
}

void note_boundary(const HazardModel& m, Diagnostics& diag) {
  if (m.theta_boundary)
    diag.warnings.push_back(fmt::format("{} frailty variance at boundary in arm {} (no detectable clustering)",
                                        to_string(m.role), m.arm));
}

}  // namespace

PointEstimates estimate(const SurvivalDataset& ds, const EstimatorConfig& config, ModelCache* cache) {
  config.propensity.validate();
  ModelCache local;
  ModelCache& models = cache ? *cache : local;

  PointEstimates pe;
  pe.times = config.times;
  pe.taus = config.taus;
  pe.grid = build_grid(ds, config.times, config.taus, config.dense_grid);
  const std::size_t g = pe.grid.size();

  for (int a = 0; a < 2; ++a) {
    const std::size_t ai = static_cast<std::size_t>(a);
    switch (config.method) {
      case Method::KaplanMeier: {
        for (std::size_t lv = 0; lv < 2; ++lv) {
          const auto km = weighted_km(ds, a, km_weighting_for(static_cast<Level>(lv)));
          pe.curve[lv][ai].resize(g);
          for (std::size_t k = 0; k < g; ++k) pe.curve[lv][ai][k] = km.at(pe.grid[k]);
        }
        break;
      }
      case Method::OutcomeRegression: {
        check_resolvable(ds, config.outcome_formula);
        const auto& om = models.get(ds, a, Role::Outcome, config.regression_backend, config.outcome_formula,
                                    config.controls);
        note_boundary(om, pe.diagnostics);
        auto curves = standardize_outcome_curve(om, ds, pe.grid);
        for (std::size_t lv = 0; lv < 2; ++lv) pe.curve[lv][ai] = std::move(curves[lv]);
        break;
      }
      case Method::Marginal:
      case Method::Frailty: {
        check_resolvable(ds, config.outcome_formula);
        check_resolvable(ds, config.censoring_formula);
        const Backend backend = config.method == Method::Marginal ? Backend::MarginalCox : Backend::Frailty;
        const auto& om = models.get(ds, a, Role::Outcome, backend, config.outcome_formula, config.controls);
        const auto& cm = models.get(ds, a, Role::Censoring, backend, config.censoring_formula, config.controls);
        note_boundary(om, pe.diagnostics);
        note_boundary(cm, pe.diagnostics);
        const ConditionalSurvivalOracle oracle(om, cm);
        auto est = estimate_arm(ds, oracle, config.propensity, pe.grid, config.aipw);
        pe.diagnostics.censoring_floored += est.floored;
        for (std::size_t lv = 0; lv < 2; ++lv) pe.curve[lv][ai] = std::move(est.curve[lv]);
        break;
      }
    }
  }

  for (std::size_t lv = 0; lv < 2; ++lv) {
    for (std::size_t ai = 0; ai < 2; ++ai) {
      const auto& c = pe.curve[lv][ai];
      for (double v : c)
        if (v < 0.0 || v > 1.0) ++pe.diagnostics.out_of_range;
      for (double t : pe.times) pe.survival[lv][ai].push_back(c[index_of(pe.grid, t)]);
      for (double tau : pe.taus) pe.rmst[lv][ai].push_back(trapezoid(pe.grid, c, tau));
    }
  }
  if (pe.diagnostics.censoring_floored)
    pe.diagnostics.warnings.push_back(
        fmt::format("{} censoring-survival evaluations were raised to the floor {:.1e}",
                    pe.diagnostics.censoring_floored, config.aipw.censoring_floor));
  if (pe.diagnostics.out_of_range)
    pe.diagnostics.warnings.push_back(
        fmt::format("{} curve values fall outside [0, 1] (reported unclipped)", pe.diagnostics.out_of_range));
  return pe;
}

}  // namespace drcrt
