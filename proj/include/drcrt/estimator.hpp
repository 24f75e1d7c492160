#pragma once

#include <array>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "drcrt/aipw.hpp"
#include "drcrt/curve.hpp"
#include "drcrt/oracle.hpp"

namespace drcrt {

enum class Method { Marginal, Frailty, KaplanMeier, OutcomeRegression };
std::string_view to_string(Method method);
Method parse_method(std::string_view name);

enum class Estimand { SPCE, RMST };
std::string_view to_string(Estimand estimand);
Estimand parse_estimand(std::string_view name);

/// A complete estimation recipe: nuisance models, estimator, targets.
struct EstimatorConfig {
  Method method = Method::Marginal;
  Backend regression_backend = Backend::MarginalCox;  // model used by OutcomeRegression
  ModelFormula outcome_formula;
  ModelFormula censoring_formula;
  PropensitySpec propensity;
  AipwOptions aipw;
  FitControls controls;
  std::vector<double> times;  // survival report times
  std::vector<double> taus;   // RMST horizons
  /// Evaluate on {0} + every observed event time + report times + taus
  /// (needed for RMST). When false only {0} + report times + taus are used,
  /// which gives identical survival values at the report times.
  bool dense_grid = true;
};

struct Diagnostics {
  std::size_t censoring_floored = 0;
  std::size_t out_of_range = 0;  // curve values outside [0, 1]
  std::vector<std::string> warnings;
};

/// Point estimates of one recipe on one dataset, indexed [Level][arm].
struct PointEstimates {
  std::vector<double> grid;
  std::vector<double> times;
  std::vector<double> taus;
  std::array<std::array<std::vector<double>, 2>, 2> curve;     // on grid
  std::array<std::array<std::vector<double>, 2>, 2> survival;  // at report times
  std::array<std::array<std::vector<double>, 2>, 2> rmst;      // at taus
  Diagnostics diagnostics;

  /// Flattened arm values for resampling: for each level, each time then
  /// each tau, the pair (arm 1, arm 0).
  std::vector<double> target_vector() const;
};

/// Sorted evaluation grid starting at 0.
std::vector<double> build_grid(const SurvivalDataset& ds, std::span<const double> times, std::span<const double> taus,
                               bool dense);

/// Fitted models shared between recipes evaluated on the same dataset.
/// Not thread-safe; use one cache per worker.
class ModelCache {
 public:
  const HazardModel& get(const SurvivalDataset& ds, int arm, Role role, Backend backend, const ModelFormula& formula,
                         const FitControls& controls);

 private:
  std::map<std::tuple<int, int, int, std::string>, std::unique_ptr<HazardModel>> models_;
};

PointEstimates estimate(const SurvivalDataset& ds, const EstimatorConfig& config, ModelCache* cache = nullptr);

}  // namespace drcrt
