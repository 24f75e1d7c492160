#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "drcrt/data.hpp"
#include "drcrt/error.hpp"
#include "drcrt/estimator.hpp"
#include "drcrt/inference.hpp"
#include "drcrt/report.hpp"
#include "drcrt/scenario.hpp"
#include "drcrt/simlab.hpp"

using namespace drcrt;

namespace {

struct FitArgs {
  std::string data;
  std::string outcome;
  std::optional<std::string> censoring;
  std::string method = "marginal";
  std::string or_model = "marginal";
  std::string estimand = "SPCE";
  std::string scale = "difference";
  std::vector<double> taus;
  std::vector<double> times;
  double pi = 0.5;
  std::string variance = "none";
  double alpha = 0.05;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string output;
  std::string format = "text";
  double floor = 1e-8;
  std::string floor_policy = "truncate";
  int digits = 3;
};

struct ScenarioArgs {
  std::string scenario = "1";
  std::string config;
  std::optional<std::size_t> clusters;
  std::optional<std::uint64_t> seed;

  ScenarioSpec spec() const {
    ScenarioSpec s = config.empty() ? ScenarioSpec::preset(scenario) : ScenarioSpec::load(config);
    if (clusters) s.clusters = *clusters;
    if (seed) s.seed = *seed;
    s.validate();
    return s;
  }
};

void add_scenario_options(CLI::App* cmd, ScenarioArgs& a) {
  cmd->add_option("--scenario", a.scenario, "Preset: 1, 2, 3, 3a, 3b, 3c")->capture_default_str();
  cmd->add_option("--config", a.config, "Scenario key = value file (overrides --scenario)");
  cmd->add_option("--clusters", a.clusters, "Number of clusters M");
  cmd->add_option("--seed", a.seed, "Random seed");
}

// Type-7 sample quantile.
double quantile(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, fmt::format("cannot write '{}'", path));
  out << text;
}

int cmd_fit(const FitArgs& a) {
  const Estimand estimand = parse_estimand(a.estimand);
  if (estimand == Estimand::RMST && a.taus.empty()) fail(ErrorKind::InvalidConfig, "--tau is required for RMST");
  if (estimand == Estimand::SPCE && !a.taus.empty()) fail(ErrorKind::InvalidConfig, "--tau applies only to RMST");
  if (a.variance != "none" && a.variance != "jackknife")
    fail(ErrorKind::InvalidConfig, fmt::format("unknown variance '{}'", a.variance));
  if (!(a.alpha > 0.0 && a.alpha < 1.0)) fail(ErrorKind::InvalidConfig, "--alpha must lie in (0, 1)");
  EffectScale scale;
  if (a.scale == "difference") scale = EffectScale::Difference;
  else if (a.scale == "ratio") scale = EffectScale::Ratio;
  else fail(ErrorKind::InvalidConfig, fmt::format("unknown scale '{}'", a.scale));

  const SurvivalDataset ds = load_csv(a.data);

  EstimatorConfig config;
  config.method = parse_method(a.method);
  if (a.or_model == "marginal") config.regression_backend = Backend::MarginalCox;
  else if (a.or_model == "frailty") config.regression_backend = Backend::Frailty;
  else fail(ErrorKind::InvalidConfig, fmt::format("unknown outcome-regression model '{}'", a.or_model));
  config.outcome_formula = ModelFormula::parse(a.outcome, Role::Outcome);
  config.censoring_formula = ModelFormula::parse(a.censoring.value_or(a.outcome), Role::Censoring);
  config.propensity.pi1 = a.pi;
  config.aipw.censoring_floor = a.floor;
  if (a.floor_policy == "truncate") config.aipw.floor_policy = FloorPolicy::Truncate;
  else if (a.floor_policy == "error") config.aipw.floor_policy = FloorPolicy::Error;
  else fail(ErrorKind::InvalidConfig, fmt::format("unknown floor policy '{}'", a.floor_policy));
  if (estimand == Estimand::SPCE) {
    config.times = a.times;
    if (config.times.empty()) {
      const std::vector<double> u(ds.times().begin(), ds.times().end());
      config.times = {quantile(u, 0.25), quantile(u, 0.5), quantile(u, 0.75)};
    }
  } else {
    config.taus = a.taus;
  }
  config.dense_grid = true;

  const PointEstimates point = estimate(ds, config);
  std::optional<Replicates> reps;
  if (a.variance == "jackknife") {
    LeaveOneOutRequirements req;
    req.censoring_events = config.method == Method::Marginal || config.method == Method::Frailty;
    reps = leave_one_cluster_out(
        ds, [&](const SurvivalDataset& sub) { return estimate(sub, config).target_vector(); }, req, a.threads);
  }
  const EstimandReport report = make_report(ds, config, estimand, scale, point, reps ? &*reps : nullptr, a.alpha);

  const std::string json_text = report.to_json().dump(2) + "\n";
  if (!a.output.empty()) write_text(a.output, json_text);
  if (a.format == "json") std::cout << json_text;
  else std::cout << report.to_text(a.digits);
  if (a.format == "json")
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

int cmd_simulate(const ScenarioArgs& s, const std::string& output, const std::string& write_config) {
  const ScenarioSpec spec = s.spec();
  const SurvivalDataset ds = generate(spec, spec.seed);
  if (!write_config.empty()) spec.save(write_config);
  if (output.empty()) {
    write_csv(ds, std::cout);
  } else {
    save_csv(ds, output);
  }
  return 0;
}

int cmd_truth(const ScenarioArgs& s, const TruthOptions& options, const std::string& output) {
  const ScenarioSpec spec = s.spec();
  const Truth truth = mc_truth(spec, options);
  const std::string text = truth.to_json().dump(2) + "\n";
  if (output.empty()) std::cout << text;
  else write_text(output, text);
  return 0;
}

int cmd_evaluate(const ScenarioArgs& s, const StudyOptions& study, TruthOptions truth_options,
                 const std::string& truth_path, const std::string& output) {
  const ScenarioSpec spec = s.spec();
  Truth truth;
  if (!truth_path.empty()) {
    std::ifstream in(truth_path);
    if (!in) fail(ErrorKind::Io, fmt::format("cannot open truth file '{}'", truth_path));
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::SchemaViolation, fmt::format("truth file is not valid JSON: {}", e.what()));
    }
    truth = Truth::from_json(j);
  } else {
    truth_options.times = study.times;
    truth_options.taus = study.taus;
    truth_options.threads = study.threads;
    truth = mc_truth(spec, truth_options);
  }
  const MetricsTable table = run_study(spec, truth, study);
  if (output.empty()) {
    std::cout << table.to_text();
  } else {
    write_text(output + ".csv", table.to_csv());
    write_text(output + ".txt", table.to_text());
  }
  return 0;
}

void print_error(std::string_view kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doubly robust survival estimands for cluster-randomized trials"};
  app.require_subcommand(1);

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Estimate survival or RMST contrasts from a CSV dataset");
  f->add_option("--data", fit.data, "CSV with cluster_id, time, event, arm and covariates")->required();
  f->add_option("--outcome", fit.outcome, "Outcome model, e.g. \"W1 + Z1*Z2 + N/50\"");
  f->add_option("--censoring", fit.censoring, "Censoring model (defaults to the outcome model)");
  f->add_option("--method", fit.method, "marginal | frailty | km | outcome_regression")->capture_default_str();
  f->add_option("--or-model", fit.or_model, "Outcome-regression model: marginal | frailty")->capture_default_str();
  f->add_option("--estimand", fit.estimand, "SPCE | RMST")->capture_default_str();
  f->add_option("--scale", fit.scale, "difference | ratio")->capture_default_str();
  f->add_option("--tau", fit.taus, "RMST horizons")->delimiter(',');
  f->add_option("--times", fit.times, "Report times (default: quartiles of observed times)")->delimiter(',');
  f->add_option("--pi", fit.pi, "Randomization probability of arm 1")->capture_default_str();
  f->add_option("--variance", fit.variance, "none | jackknife")->capture_default_str();
  f->add_option("--alpha", fit.alpha, "Interval level is 1 - alpha")->capture_default_str();
  f->add_option("--seed", fit.seed, "Recorded for reproducibility; the fit itself is deterministic");
  f->add_option("--threads", fit.threads, "Worker threads for the jackknife")->capture_default_str();
  f->add_option("--output", fit.output, "Write the JSON report here");
  f->add_option("--format", fit.format, "Standard output format: text | json")->capture_default_str();
  f->add_option("--floor", fit.floor, "Floor for the censoring survival")->capture_default_str();
  f->add_option("--floor-policy", fit.floor_policy, "truncate | error")->capture_default_str();
  f->add_option("--digits", fit.digits, "Significant digits in the text report")->capture_default_str();

  ScenarioArgs sim_s;
  std::string sim_out, sim_config_out;
  auto* sim = app.add_subcommand("simulate", "Generate one trial dataset as CSV");
  add_scenario_options(sim, sim_s);
  sim->add_option("--output", sim_out, "CSV path (default: standard output)");
  sim->add_option("--write-config", sim_config_out, "Also save the scenario as a key = value file");

  ScenarioArgs truth_s;
  TruthOptions truth_o;
  truth_o.times = {0.1, 0.5, 1.0};
  std::string truth_out;
  auto* tr = app.add_subcommand("truth", "Monte Carlo truth of the estimands as JSON");
  tr->add_option("--scenario", truth_s.scenario, "Preset: 1, 2, 3, 3a, 3b, 3c")->capture_default_str();
  tr->add_option("--config", truth_s.config, "Scenario key = value file (overrides --scenario)");
  tr->add_option("--clusters", truth_o.clusters, "Superpopulation clusters")->capture_default_str();
  tr->add_option("--seed", truth_o.seed, "Random seed")->capture_default_str();
  tr->add_option("--times", truth_o.times, "Survival times")->delimiter(',');
  tr->add_option("--tau", truth_o.taus, "RMST horizons")->delimiter(',');
  tr->add_option("--step", truth_o.rmst_step, "Grid step for RMST")->capture_default_str();
  tr->add_option("--threads", truth_o.threads, "Worker threads")->capture_default_str();
  tr->add_option("--output", truth_out, "JSON path (default: standard output)");

  ScenarioArgs ev_s;
  StudyOptions study;
  TruthOptions ev_truth;
  std::string ev_variance = "none", ev_truth_path, ev_out;
  auto* ev = app.add_subcommand("evaluate", "Run a simulation study and tabulate PBias, MCSD, AESE, CP");
  ev->add_option("--scenario", ev_s.scenario, "Preset: 1, 2, 3, 3a, 3b, 3c")->capture_default_str();
  ev->add_option("--config", ev_s.config, "Scenario key = value file (overrides --scenario)");
  ev->add_option("--clusters", ev_s.clusters, "Number of clusters M");
  ev->add_option("--reps", study.reps, "Monte Carlo replications")->capture_default_str();
  ev->add_option("--seed", study.seed, "Master seed; rep r uses a seed derived from (seed, r)")->capture_default_str();
  ev->add_option("--strategies", study.strategies, "Subset of the 13 strategies (default: all)")->delimiter(',');
  ev->add_option("--times", study.times, "Survival times")->delimiter(',');
  ev->add_option("--tau", study.taus, "RMST horizons")->delimiter(',');
  ev->add_option("--variance", ev_variance, "none | jackknife")->capture_default_str();
  ev->add_option("--alpha", study.alpha, "Interval level is 1 - alpha")->capture_default_str();
  ev->add_option("--threads", study.threads, "Worker threads")->capture_default_str();
  ev->add_option("--truth", ev_truth_path, "Truth JSON from the truth command");
  ev->add_option("--truth-clusters", ev_truth.clusters, "Clusters for the truth when --truth is absent")
      ->capture_default_str();
  ev->add_option("--truth-seed", ev_truth.seed, "Seed for the truth when --truth is absent")->capture_default_str();
  ev->add_option("--output", ev_out, "Write <output>.csv and <output>.txt (default: text to standard output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("InvalidConfig", e.what());
    return 2;
  }

  try {
    if (*f) return cmd_fit(fit);
    if (*sim) return cmd_simulate(sim_s, sim_out, sim_config_out);
    if (*tr) return cmd_truth(truth_s, truth_o, truth_out);
    if (ev_variance != "none" && ev_variance != "jackknife")
      fail(ErrorKind::InvalidConfig, fmt::format("unknown variance '{}'", ev_variance));
    study.jackknife = ev_variance == "jackknife";
    return cmd_evaluate(ev_s, study, ev_truth, ev_truth_path, ev_out);
  } catch (const Error& e) {
    print_error(to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    print_error("Internal", e.what());
    return 1;
  }
}
