#include "drcrt/report.hpp"

#include <cmath>

#include <fmt/format.h>

#include "drcrt/error.hpp"
#include "drcrt/tdist.hpp"

namespace drcrt {

using nlohmann::json;

EstimandReport make_report(const SurvivalDataset& ds, const EstimatorConfig& config, Estimand estimand,
                           EffectScale scale, const PointEstimates& point, const Replicates* replicates,
                           double alpha) {
  EstimandReport r;
  r.method = std::string(to_string(config.method));
  if (config.method == Method::OutcomeRegression)
    r.method += config.regression_backend == Backend::Frailty ? " (frailty)" : " (marginal)";
  r.estimand = std::string(to_string(estimand));
  r.scale = std::string(to_string(scale));
  r.pi1 = config.propensity.pi1;
  r.outcome_formula = config.method == Method::KaplanMeier ? "" : config.outcome_formula.to_string();
  r.censoring_formula = (config.method == Method::Marginal || config.method == Method::Frailty)
                            ? config.censoring_formula.to_string()
                            : "";
  r.clusters = ds.num_clusters();
  r.subjects = ds.num_subjects();
  r.alpha = alpha;
  r.df = jackknife_df(ds.num_clusters());
  r.variance = replicates ? "jackknife" : "none";
  r.grid = point.grid;
  r.censoring_floored = point.diagnostics.censoring_floored;
  r.out_of_range = point.diagnostics.out_of_range;
  r.warnings = point.diagnostics.warnings;

  const auto target = point.target_vector();
  const std::size_t per_level = point.times.size() + point.taus.size();
  const double q = replicates ? student_t_quantile(1.0 - alpha / 2.0, r.df) : 0.0;
  auto interval = [&](double est, double var) {
    const double se = std::sqrt(std::max(0.0, var));
    return Interval{est, se, est - q * se, est + q * se};
  };

  for (std::size_t lv = 0; lv < 2; ++lv) {
    auto& level = r.levels[lv];
    level.curve = {point.curve[lv][0], point.curve[lv][1]};
    const bool spce = estimand == Estimand::SPCE;
    const auto& times = spce ? point.times : point.taus;
    for (std::size_t k = 0; k < times.size(); ++k) {
      const std::size_t slot = lv * per_level + (spce ? k : point.times.size() + k);
      ReportRow row;
      row.time = times[k];
      row.arm1.value = target[2 * slot];
      row.arm0.value = target[2 * slot + 1];
      row.effect.value = apply_scale(scale, row.arm1.value, row.arm0.value);
      if (replicates) {
        const auto rep1 = replicates->column(2 * slot);
        const auto rep0 = replicates->column(2 * slot + 1);
        const Eigen::Matrix2d cov = covariance_matrix(rep1, rep0);
        row.arm1.interval = interval(row.arm1.value, cov(0, 0));
        row.arm0.interval = interval(row.arm0.value, cov(1, 1));
        double var_effect;
        if (scale == EffectScale::Difference) {
          var_effect = difference_variance(cov);
        } else {
          std::vector<double> ratio(rep1.size());
          for (std::size_t g = 0; g < rep1.size(); ++g) ratio[g] = apply_scale(scale, rep1[g], rep0[g]);
          var_effect = jackknife_variance(ratio);
        }
        row.effect.interval = interval(row.effect.value, var_effect);
      }
      level.rows.push_back(row);
    }
  }
  return r;
}

namespace {

json quantity_json(const Quantity& q) {
  json j{{"estimate", q.value}};
  if (q.interval) {
    j["se"] = q.interval->se;
    j["lower"] = q.interval->lower;
    j["upper"] = q.interval->upper;
  }
  return j;
}

template <class T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) fail(ErrorKind::SchemaViolation, fmt::format("report is missing '{}'", key));
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::SchemaViolation, fmt::format("report field '{}' has the wrong type: {}", key, e.what()));
  }
}

Quantity quantity_from(const json& j) {
  Quantity q;
  q.value = field<double>(j, "estimate");
  const bool has_se = j.contains("se");
  if (has_se != j.contains("lower") || has_se != j.contains("upper"))
    fail(ErrorKind::SchemaViolation, "interval needs se, lower and upper together");
  if (has_se) {
    q.interval = Interval{q.value, field<double>(j, "se"), field<double>(j, "lower"), field<double>(j, "upper")};
  }
  return q;
}

constexpr const char* kLevelKeys[2] = {"cluster", "individual"};

}  // namespace

json EstimandReport::to_json() const {
  json j;
  j["schema"] = kSchema;
  j["version"] = kVersion;
  j["method"] = method;
  j["estimand"] = estimand;
  j["scale"] = scale;
  j["pi"] = {{"p0", 1.0 - pi1}, {"p1", pi1}};
  j["outcome_formula"] = outcome_formula;
  j["censoring_formula"] = censoring_formula;
  j["clusters"] = clusters;
  j["subjects"] = subjects;
  j["variance"] = variance;
  j["alpha"] = alpha;
  j["df"] = df;
  j["grid"] = grid;
  for (std::size_t lv = 0; lv < 2; ++lv) {
    json level;
    json rows = json::array();
    for (const auto& row : levels[lv].rows)
      rows.push_back({{"time", row.time},
                      {"arm1", quantity_json(row.arm1)},
                      {"arm0", quantity_json(row.arm0)},
                      {"effect", quantity_json(row.effect)}});
    level["rows"] = rows;
    level["curve"] = {{"arm1", levels[lv].curve[1]}, {"arm0", levels[lv].curve[0]}};
    j["levels"][kLevelKeys[lv]] = level;
  }
  j["diagnostics"] = {{"censoring_floored", censoring_floored}, {"out_of_range", out_of_range}, {"warnings", warnings}};
  return j;
}

EstimandReport EstimandReport::from_json(const json& j) {
  if (field<std::string>(j, "schema") != kSchema)
    fail(ErrorKind::SchemaViolation, "not a drcrt report (schema tag mismatch)");
  if (const int v = field<int>(j, "version"); v != kVersion)
    fail(ErrorKind::SchemaViolation, fmt::format("unsupported report version {} (expected {})", v, kVersion));
  EstimandReport r;
  r.method = field<std::string>(j, "method");
  r.estimand = field<std::string>(j, "estimand");
  r.scale = field<std::string>(j, "scale");
  r.pi1 = field<double>(field<json>(j, "pi"), "p1");
  r.outcome_formula = field<std::string>(j, "outcome_formula");
  r.censoring_formula = field<std::string>(j, "censoring_formula");
  r.clusters = field<std::size_t>(j, "clusters");
  r.subjects = field<std::size_t>(j, "subjects");
  r.variance = field<std::string>(j, "variance");
  if (r.variance != "none" && r.variance != "jackknife")
    fail(ErrorKind::SchemaViolation, fmt::format("unknown variance '{}'", r.variance));
  r.alpha = field<double>(j, "alpha");
  r.df = field<int>(j, "df");
  r.grid = field<std::vector<double>>(j, "grid");
  const json levels = field<json>(j, "levels");
  for (std::size_t lv = 0; lv < 2; ++lv) {
    const json level = field<json>(levels, kLevelKeys[lv]);
    const json rows = field<json>(level, "rows");
    if (!rows.is_array()) fail(ErrorKind::SchemaViolation, "rows must be an array");
    for (const auto& row : rows) {
      ReportRow rr;
      rr.time = field<double>(row, "time");
      rr.arm1 = quantity_from(field<json>(row, "arm1"));
      rr.arm0 = quantity_from(field<json>(row, "arm0"));
      rr.effect = quantity_from(field<json>(row, "effect"));
      if ((r.variance == "jackknife") != rr.effect.interval.has_value())
        fail(ErrorKind::SchemaViolation, "interval presence disagrees with the variance setting");
      r.levels[lv].rows.push_back(rr);
    }
    const json curve = field<json>(level, "curve");
    r.levels[lv].curve[1] = field<std::vector<double>>(curve, "arm1");
    r.levels[lv].curve[0] = field<std::vector<double>>(curve, "arm0");
    for (const auto& c : r.levels[lv].curve)
      if (c.size() != r.grid.size()) fail(ErrorKind::SchemaViolation, "curve length differs from grid length");
  }
  const json diag = field<json>(j, "diagnostics");
  r.censoring_floored = field<std::size_t>(diag, "censoring_floored");
  r.out_of_range = field<std::size_t>(diag, "out_of_range");
  r.warnings = field<std::vector<std::string>>(diag, "warnings");
  return r;
}

namespace {

std::string num(double v, int digits) { return fmt::format("{:.{}g}", v, digits); }

std::string cell(const Quantity& q, int digits) {
  if (!q.interval) return num(q.value, digits);
  return fmt::format("{} ({}, {})", num(q.value, digits), num(q.interval->lower, digits),
                     num(q.interval->upper, digits));
}

}  // namespace

std::string EstimandReport::to_text(int digits) const {
  std::string out;
  out += fmt::format("drcrt fit: method = {}, estimand = {}\n", method, estimand);
  out += fmt::format("Treatment probs (p0, p1): {}, {}\n", num(1.0 - pi1, 6), num(pi1, 6));
  if (!outcome_formula.empty()) out += fmt::format("Outcome model:   Surv(time, event) ~ {}\n", outcome_formula);
  if (!censoring_formula.empty())
    out += fmt::format("Censoring model: Surv(time, event == 0) ~ {}\n", censoring_formula);
  out += fmt::format("Clusters (M):    {}\n", clusters);
  out += fmt::format("Obs (N):         {}\n", subjects);

  const bool spce = estimand == "SPCE";
  const bool ratio = scale == "ratio";
  const std::string a1 = spce ? "S1" : "RMST1", a0 = spce ? "S0" : "RMST0";
  const std::string eff = a1 + (ratio ? "/" : "-") + a0;
  const bool ci = variance == "jackknife";
  const std::string suffix = ci ? " (LCL, UCL)" : "";

  for (std::size_t lv = 0; lv < 2; ++lv) {
    const auto& rows = levels[lv].rows;
    std::vector<std::array<std::string, 4>> table;
    for (const auto& row : rows)
      table.push_back({fmt::format("{}={}", spce ? "t" : "tau", num(row.time, digits)), cell(row.arm1, digits),
                       cell(row.arm0, digits), cell(row.effect, digits)});
    std::array<std::size_t, 4> width{0, a1.size() + suffix.size(), a0.size() + suffix.size(), eff.size() + suffix.size()};
    for (const auto& t : table)
      for (std::size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], t[c].size());

    out += fmt::format("\n{}-level {}:\n", lv == 0 ? "Cluster" : "Individual", estimand);
    out += fmt::format("{:<{}} {:<{}} {:<{}} {}\n", "", width[0], a1 + suffix, width[1], a0 + suffix, width[2],
                       eff + suffix);
    for (const auto& t : table)
      out += fmt::format("{:<{}} {:<{}} {:<{}} {}\n", t[0], width[0], t[1], width[1], t[2], width[2], t[3]);
    if (ci) out += fmt::format("  t-intervals with df = {}, alpha = {:.3f}\n", df, alpha);
  }
  if (!warnings.empty()) {
    out += "\nWarnings:\n";
    for (const auto& w : warnings) out += "  " + w + "\n";
  }
  return out;
}

}  // namespace drcrt
