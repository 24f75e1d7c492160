#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "drcrt/curve.hpp"
#include "drcrt/estimator.hpp"
#include "drcrt/inference.hpp"

namespace drcrt {

struct Quantity {
  double value = 0.0;
  std::optional<Interval> interval;  // present only with jackknife variance

  friend bool operator==(const Quantity&, const Quantity&) = default;
};

/// One report row: both arms and their contrast at a time (SPCE) or horizon (RMST).
struct ReportRow {
  double time = 0.0;
  Quantity arm1;
  Quantity arm0;
  Quantity effect;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct LevelReport {
  std::vector<ReportRow> rows;
  std::array<std::vector<double>, 2> curve;  // [arm] on the report grid

  friend bool operator==(const LevelReport&, const LevelReport&) = default;
};

struct EstimandReport {
  static constexpr const char* kSchema = "drcrt.report";
  static constexpr int kVersion = 1;

  std::string method;
  std::string estimand;
  std::string scale;
  double pi1 = 0.5;
  std::string outcome_formula;
  std::string censoring_formula;
  std::size_t clusters = 0;
  std::size_t subjects = 0;
  std::string variance = "none";
  double alpha = 0.05;
  int df = 0;
  std::vector<double> grid;
  std::array<LevelReport, 2> levels;  // [Level]
  std::size_t censoring_floored = 0;
  std::size_t out_of_range = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  /// Throws SchemaViolation on a wrong schema tag, version or shape.
  static EstimandReport from_json(const nlohmann::json& j);
  std::string to_text(int digits = 3) const;

  friend bool operator==(const EstimandReport&, const EstimandReport&) = default;
};

EstimandReport make_report(const SurvivalDataset& ds, const EstimatorConfig& config, Estimand estimand,
                           EffectScale scale, const PointEstimates& point, const Replicates* replicates,
                           double alpha);

}  // namespace drcrt
