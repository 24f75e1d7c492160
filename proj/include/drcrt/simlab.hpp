#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "drcrt/curve.hpp"
#include "drcrt/data.hpp"
#include "drcrt/estimator.hpp"
#include "drcrt/scenario.hpp"

namespace drcrt {

/// One simulated trial. Columns: cluster-level W1, W2; subject-level Z1, Z2.
/// Identical (spec, seed) give identical datasets.
SurvivalDataset generate(const ScenarioSpec& spec, std::uint64_t seed);

/// Mean fraction of censored subjects over `reps` generated trials.
double censoring_rate(const ScenarioSpec& spec, std::size_t reps, std::uint64_t seed);

enum class Series { Arm1 = 0, Arm0 = 1, Difference = 2 };
std::string_view to_string(Series series);

/// Monte Carlo truth at a list of points, indexed [Level][Series][point].
struct TruthTable {
  std::vector<double> points;
  std::array<std::array<std::vector<double>, 3>, 2> value;
  std::array<std::array<std::vector<double>, 3>, 2> se;
  std::array<std::vector<double>, 3> gap_se;  // MC SE of (cluster-level - individual-level)

  /// Value at a point that must be present in `points`.
  double at(Level level, Series series, double point) const;
  double se_at(Level level, Series series, double point) const;
  double gap_se_at(Series series, double point) const;
};

struct Truth {
  std::uint64_t population_hash = 0;
  std::size_t clusters = 0;
  std::uint64_t seed = 0;
  TruthTable survival;  // on the whole evaluation grid
  TruthTable rmst;      // at the horizons

  nlohmann::json to_json() const;
  static Truth from_json(const nlohmann::json& j);
};

struct TruthOptions {
  std::size_t clusters = 100000;
  std::uint64_t seed = 1;
  std::vector<double> times;
  std::vector<double> taus;
  double rmst_step = 0.01;  // extra grid spacing below the largest horizon
  unsigned threads = 1;
  bool use_cache = true;  // read and write $DRCRT_CACHE_DIR when set
};

/// Evaluation grid of the truth: {0}, the times, the horizons and a regular
/// step up to the largest horizon.
std::vector<double> truth_grid(const TruthOptions& options);

/// Draws clusters from the superpopulation and averages the closed-form
/// conditional survival exp(-lambda t B e^mu) of every subject under both
/// arms (independent B for each arm). Cluster means are averaged (cluster
/// level) or size-weighted (individual level); RMST is the trapezoid on the grid.
Truth mc_truth(const ScenarioSpec& spec, const TruthOptions& options);

struct Strategy {
  std::string name;
  EstimatorConfig config;
};

/// The 13 comparison strategies in their canonical order: marginal and frailty
/// AIPW with o{1,0}c{1,0} working models, marginal and frailty outcome
/// regression with OR{1,0}, and KM.
std::vector<Strategy> study_strategies(const ScenarioSpec& spec);
/// Strategies by name, in the given order; throws InvalidConfig on unknown names.
std::vector<Strategy> select_strategies(const ScenarioSpec& spec, const std::vector<std::string>& names);

struct StudyOptions {
  std::size_t reps = 100;
  std::uint64_t seed = 1;
  std::vector<std::string> strategies;  // empty = all 13
  std::vector<double> times{0.1, 0.5, 1.0};
  std::vector<double> taus;
  bool jackknife = false;
  double alpha = 0.05;
  unsigned threads = 1;
  double max_failure_fraction = 0.05;
};

struct MetricsRow {
  std::string strategy;
  Level level = Level::Cluster;
  Estimand estimand = Estimand::SPCE;
  Series series = Series::Difference;
  double time = 0.0;
  double truth = 0.0;
  double mean = 0.0;
  double pbias = 0.0;  // |mean - truth| / |truth| * 100
  double mcsd = 0.0;   // SD of estimates, n - 1 denominator
  std::optional<double> aese;
  std::optional<double> cp;
  std::size_t reps = 0;  // successful reps
};

struct MetricsTable {
  std::size_t reps = 0;
  bool jackknife = false;
  std::vector<MetricsRow> rows;
  std::vector<std::pair<std::string, std::size_t>> failures;  // per strategy, in run order
  std::vector<std::string> failure_messages;                  // first message of each failing rep

  const MetricsRow* find(const std::string& strategy, Level level, Estimand estimand, Series series,
                         double time) const;
  std::string to_csv() const;
  /// Column order: PBias, MCSD, AESE, CP.
  std::string to_text() const;
};

/// Per rep r: generate with derive_seed(seed, r), fit every requested
/// strategy, record estimates (and jackknife SEs). Throws StudyAborted when
/// a strategy fails in more than max_failure_fraction of reps.
MetricsTable run_study(const ScenarioSpec& spec, const Truth& truth, const StudyOptions& options);

}  // namespace drcrt
