#include "drcrt/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <tuple>

#include <fmt/format.h>

#include "drcrt/error.hpp"
#include "drcrt/inference.hpp"
#include "drcrt/parallel.hpp"
#include "drcrt/simd.hpp"
#include "drcrt/tdist.hpp"

namespace drcrt {

namespace {

struct ClusterDraw {
  int size = 0;
  double w1 = 0.0;
  double w2 = 0.0;
  std::array<double, 2> frailty{};  // [arm]
  double censoring_frailty = 1.0;
};

class Sampler {
 public:
  Sampler(const ScenarioSpec& spec, std::uint64_t seed)
      : spec_(spec),
        rng_(seed),
        size_(spec.size_min, spec.size_max),
        b1_(spec.frailty_shape_arm1, 1.0 / spec.frailty_shape_arm1),
        b0_(spec.frailty_shape_arm0, 1.0 / spec.frailty_shape_arm0),
        r_(spec.frailty_shape_censoring, 1.0 / spec.frailty_shape_censoring) {}

  std::mt19937_64& rng() { return rng_; }

  int arm() { return unit_(rng_) < spec_.pi1 ? 1 : 0; }

  ClusterDraw cluster() {
    ClusterDraw c;
    c.size = size_(rng_);
    c.w1 = unit_(rng_) < spec_.w1_prob ? 1.0 : 0.0;
    c.w2 = (spec_.w2_size_mean ? c.size / 50.0 : spec_.w2_mean) + spec_.w2_sd * normal_(rng_);
    c.frailty[1] = b1_(rng_);
    c.frailty[0] = b0_(rng_);
    c.censoring_frailty = r_(rng_);
    return c;
  }

  std::array<double, 6> subject(const ClusterDraw& c) {
    const double z1 = (spec_.z1_size_mean ? std::log(static_cast<double>(c.size)) / 5.0 : spec_.z1_mean) +
                      spec_.z1_sd * normal_(rng_);
    const double z2 = unit_(rng_) < spec_.z2_prob ? 1.0 : 0.0;
    return {c.w1, c.w2, z1, z2, z1 * z2, c.size / 50.0};
  }

  double exponential(double rate) { return exp_(rng_) / rate; }

 private:
  const ScenarioSpec& spec_;
  std::mt19937_64 rng_;
  std::uniform_int_distribution<int> size_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::exponential_distribution<double> exp_{1.0};
  std::gamma_distribution<double> b1_, b0_, r_;
};

double dot(const std::array<double, 6>& a, const std::array<double, 6>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < 6; ++k) s += a[k] * b[k];
  return s;
}

double event_rate(const ScenarioSpec& spec, int arm, const ClusterDraw& c, const std::array<double, 6>& q) {
  const double mu = spec.beta_a * arm + dot(spec.beta, q) + spec.beta_aN * arm * q[5];
  return spec.baseline_event(arm, c.size) * c.frailty[static_cast<std::size_t>(arm)] * std::exp(mu);
}

}  // namespace

SurvivalDataset generate(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  Sampler sampler(spec, seed);
  DatasetBuilder builder({"W1", "W2"}, {"Z1", "Z2"});
  for (std::size_t i = 0; i < spec.clusters; ++i) {
    const int a = sampler.arm();
    const ClusterDraw c = sampler.cluster();
    builder.add_cluster(fmt::format("c{}", i + 1), a, {c.w1, c.w2});
    const double h = spec.baseline_censoring(c.size) * c.censoring_frailty;
    for (int j = 0; j < c.size; ++j) {
      const auto q = sampler.subject(c);
      const double t = sampler.exponential(event_rate(spec, a, c, q));
      const double cens = std::min(sampler.exponential(h * std::exp(dot(spec.alpha, q))), spec.admin_cap);
      builder.add_subject(std::min(t, cens), t <= cens ? 1 : 0, {q[2], q[3]});
    }
  }
  DatasetOptions options;
  options.require_events_per_arm = false;
  return std::move(builder).build(options);
}

double censoring_rate(const ScenarioSpec& spec, std::size_t reps, std::uint64_t seed) {
  double censored = 0.0, total = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto ds = generate(spec, derive_seed(seed, r));
    for (int e : ds.events()) censored += e == 0;
    total += static_cast<double>(ds.num_subjects());
  }
  return censored / total;
}

std::string_view to_string(Series series) {
  switch (series) {
    case Series::Arm1: return "arm1";
    case Series::Arm0: return "arm0";
    case Series::Difference: return "difference";
  }
  return "unknown";
}

namespace {

std::size_t point_index(const std::vector<double>& points, double p) {
  for (std::size_t k = 0; k < points.size(); ++k)
    if (std::abs(points[k] - p) <= 1e-12 * std::max(1.0, std::abs(p))) return k;
  fail(ErrorKind::InvalidConfig, fmt::format("truth is not available at {}", p));
}

}  // namespace

double TruthTable::at(Level level, Series series, double point) const {
  return value[static_cast<std::size_t>(level)][static_cast<std::size_t>(series)][point_index(points, point)];
}

double TruthTable::se_at(Level level, Series series, double point) const {
  return se[static_cast<std::size_t>(level)][static_cast<std::size_t>(series)][point_index(points, point)];
}

double TruthTable::gap_se_at(Series series, double point) const {
  return gap_se[static_cast<std::size_t>(series)][point_index(points, point)];
}

namespace {

nlohmann::json table_json(const TruthTable& t) {
  return {{"points", t.points}, {"value", t.value}, {"se", t.se}, {"gap_se", t.gap_se}};
}

TruthTable table_from(const nlohmann::json& j) {
  TruthTable t;
  try {
    j.at("points").get_to(t.points);
    j.at("value").get_to(t.value);
    j.at("se").get_to(t.se);
    j.at("gap_se").get_to(t.gap_se);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaViolation, fmt::format("malformed truth table: {}", e.what()));
  }
  for (const auto& lv : t.value)
    for (const auto& s : lv)
      if (s.size() != t.points.size()) fail(ErrorKind::SchemaViolation, "truth table length mismatch");
  return t;
}

}  // namespace

nlohmann::json Truth::to_json() const {
  return {{"schema", "drcrt.truth"},
          {"version", 1},
          {"population_hash", fmt::format("{:016x}", population_hash)},
          {"clusters", clusters},
          {"seed", seed},
          {"survival", table_json(survival)},
          {"rmst", table_json(rmst)}};
}

Truth Truth::from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("schema", "") != "drcrt.truth" || j.value("version", 0) != 1)
    fail(ErrorKind::SchemaViolation, "not a drcrt truth document");
  Truth t;
  try {
    t.population_hash = std::stoull(j.at("population_hash").get<std::string>(), nullptr, 16);
    t.clusters = j.at("clusters").get<std::size_t>();
    t.seed = j.at("seed").get<std::uint64_t>();
  } catch (const std::exception& e) {
    fail(ErrorKind::SchemaViolation, fmt::format("malformed truth header: {}", e.what()));
  }
  t.survival = table_from(j.at("survival"));
  t.rmst = table_from(j.at("rmst"));
  return t;
}

std::vector<double> truth_grid(const TruthOptions& options) {
  std::vector<double> grid{0.0};
  grid.insert(grid.end(), options.times.begin(), options.times.end());
  grid.insert(grid.end(), options.taus.begin(), options.taus.end());
  if (!options.taus.empty()) {
    const double tau_max = *std::max_element(options.taus.begin(), options.taus.end());
    if (!(options.rmst_step > 0.0)) fail(ErrorKind::InvalidConfig, "RMST grid step must be positive");
    for (std::size_t k = 1; k * options.rmst_step < tau_max; ++k) grid.push_back(k * options.rmst_step);
  }
  for (double t : grid)
    if (!(t >= 0.0) || !std::isfinite(t)) fail(ErrorKind::InvalidConfig, fmt::format("invalid truth time {}", t));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

namespace {

// Running sums of a per-cluster quantity x with cluster size N:
// x, x^2, N x, N x^2, N^2 x, N^2 x^2.
using Moments = std::array<double, 6>;

struct Block {
  std::vector<Moments> m;  // [(point * 3) + series], survival points then horizons
  double n = 0.0, n2 = 0.0;
};

void add(Moments& m, double x, double n) {
  m[0] += x;
  m[1] += x * x;
  m[2] += n * x;
  m[3] += n * x * x;
  m[4] += n * n * x;
  m[5] += n * n * x * x;
}

void fill(TruthTable& table, const std::vector<Moments>& m, std::size_t offset, double clusters, double sum_n,
          double sum_n2) {
  const std::size_t p = table.points.size();
  for (auto& lv : table.value)
    for (auto& s : lv) s.assign(p, 0.0);
  for (auto& lv : table.se)
    for (auto& s : lv) s.assign(p, 0.0);
  for (auto& s : table.gap_se) s.assign(p, 0.0);
  const double nbar = sum_n / clusters;
  const double denom = clusters * (clusters - 1.0);
  for (std::size_t k = 0; k < p; ++k) {
    for (std::size_t s = 0; s < 3; ++s) {
      const auto& x = m[(offset + k) * 3 + s];
      const double sc = x[0] / clusters;
      const double si = x[2] / sum_n;
      const double ss_c = std::max(0.0, x[1] - clusters * sc * sc);
      const double ss_i = std::max(0.0, x[5] - 2.0 * si * x[4] + si * si * sum_n2);
      const double cross = x[3] - (si + sc) * x[2] + sc * si * sum_n;
      const double ss_gap = std::max(0.0, ss_c - 2.0 * cross / nbar + ss_i / (nbar * nbar));
      table.value[0][s][k] = sc;
      table.value[1][s][k] = si;
      table.se[0][s][k] = std::sqrt(ss_c / denom);
      table.se[1][s][k] = std::sqrt(ss_i / (nbar * nbar) / denom);
      table.gap_se[s][k] = std::sqrt(ss_gap / denom);
    }
  }
}

std::string cache_key(const ScenarioSpec& spec, const TruthOptions& o, const std::vector<double>& grid) {
  std::string points;
  for (double t : grid) points += fmt::format("{:.17g},", t);
  points += "|";
  for (double t : o.taus) points += fmt::format("{:.17g},", t);
  return fmt::format("truth-{:016x}-{}-{}-{:016x}.json", spec.population_hash(), o.clusters, o.seed, fnv1a(points));
}

Truth compute_truth(const ScenarioSpec& spec, const TruthOptions& options, const std::vector<double>& grid) {
  const std::size_t g = grid.size();
  const std::size_t h = options.taus.size();
  const std::size_t slots = (g + h) * 3;
  constexpr std::size_t kBlock = 1024;
  const std::size_t n_blocks = (options.clusters + kBlock - 1) / kBlock;
  std::vector<Block> blocks(n_blocks);
  const auto& kern = simd::kernels();

  parallel_for(n_blocks, options.threads, [&](std::size_t b) {
    Block& blk = blocks[b];
    blk.m.assign(slots, Moments{});
    std::array<std::vector<double>, 2> sum{std::vector<double>(g), std::vector<double>(g)};
    std::array<std::vector<double>, 2> mean{std::vector<double>(g), std::vector<double>(g)};
    const std::size_t end = std::min(options.clusters, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      Sampler sampler(spec, derive_seed(options.seed, i));
      const ClusterDraw c = sampler.cluster();
      std::fill(sum[0].begin(), sum[0].end(), 0.0);
      std::fill(sum[1].begin(), sum[1].end(), 0.0);
      for (int j = 0; j < c.size; ++j) {
        const auto q = sampler.subject(c);
        for (int a = 0; a < 2; ++a)
          kern.accumulate_exp(grid.data(), g, event_rate(spec, a, c, q), sum[static_cast<std::size_t>(a)].data());
      }
      const double n = c.size;
      for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t k = 0; k < g; ++k) mean[a][k] = sum[a][k] / n;
      // Series order: arm 1, arm 0, difference.
      for (std::size_t k = 0; k < g; ++k) {
        add(blk.m[k * 3 + 0], mean[1][k], n);
        add(blk.m[k * 3 + 1], mean[0][k], n);
        add(blk.m[k * 3 + 2], mean[1][k] - mean[0][k], n);
      }
      for (std::size_t k = 0; k < h; ++k) {
        const double r1 = trapezoid(grid, mean[1], options.taus[k]);
        const double r0 = trapezoid(grid, mean[0], options.taus[k]);
        add(blk.m[(g + k) * 3 + 0], r1, n);
        add(blk.m[(g + k) * 3 + 1], r0, n);
        add(blk.m[(g + k) * 3 + 2], r1 - r0, n);
      }
      blk.n += n;
      blk.n2 += n * n;
    }
  });

  std::vector<Moments> total(slots, Moments{});
  double sum_n = 0.0, sum_n2 = 0.0;
  for (const auto& blk : blocks) {
    for (std::size_t s = 0; s < slots; ++s)
      for (std::size_t r = 0; r < 6; ++r) total[s][r] += blk.m[s][r];
    sum_n += blk.n;
    sum_n2 += blk.n2;
  }

  Truth truth;
  truth.population_hash = spec.population_hash();
  truth.clusters = options.clusters;
  truth.seed = options.seed;
  truth.survival.points = grid;
  truth.rmst.points = options.taus;
  const double m = static_cast<double>(options.clusters);
  fill(truth.survival, total, 0, m, sum_n, sum_n2);
  fill(truth.rmst, total, g, m, sum_n, sum_n2);
  return truth;
}

}  // namespace

Truth mc_truth(const ScenarioSpec& spec, const TruthOptions& options) {
  spec.validate();
  if (options.clusters < 2) fail(ErrorKind::InvalidConfig, "truth needs at least 2 clusters");
  const auto grid = truth_grid(options);

  std::filesystem::path cache_path;
  if (const char* dir = std::getenv("DRCRT_CACHE_DIR"); options.use_cache && dir && *dir)
    cache_path = std::filesystem::path(dir) / cache_key(spec, options, grid);
  if (!cache_path.empty() && std::filesystem::exists(cache_path)) {
    try {
      std::ifstream in(cache_path);
      Truth cached = Truth::from_json(nlohmann::json::parse(in));
      if (cached.population_hash == spec.population_hash() && cached.clusters == options.clusters &&
          cached.seed == options.seed && cached.survival.points == grid && cached.rmst.points == options.taus)
        return cached;
    } catch (const std::exception&) {
      // unreadable cache entries are recomputed and overwritten
    }
  }

  Truth truth = compute_truth(spec, options, grid);
  if (!cache_path.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(cache_path.parent_path(), ec);
    const auto tmp = cache_path.string() + fmt::format(".tmp{}", derive_seed(options.seed, truth.clusters));
    {
      std::ofstream out(tmp);
      if (out) out << truth.to_json().dump();
    }
    std::filesystem::rename(tmp, cache_path, ec);
    if (ec) std::filesystem::remove(tmp, ec);
  }
  return truth;
}

std::vector<Strategy> study_strategies(const ScenarioSpec& spec) {
  const ModelFormula o1 = spec.correct_formula(Role::Outcome), o0 = spec.misspecified_formula(Role::Outcome);
  const ModelFormula c1 = spec.correct_formula(Role::Censoring), c0 = spec.misspecified_formula(Role::Censoring);
  std::vector<Strategy> out;
  auto base = [&] {
    EstimatorConfig config;
    config.propensity.pi1 = spec.pi1;
    config.censoring_formula = c1;
    return config;
  };
  for (Method method : {Method::Marginal, Method::Frailty}) {
    for (int o : {1, 0}) {
      for (int c : {1, 0}) {
        auto config = base();
        config.method = method;
        config.outcome_formula = o ? o1 : o0;
        config.censoring_formula = c ? c1 : c0;
        out.push_back({fmt::format("{}-o{}c{}", to_string(method), o, c), config});
      }
    }
  }
  for (Backend backend : {Backend::MarginalCox, Backend::Frailty}) {
    for (int o : {1, 0}) {
      auto config = base();
      config.method = Method::OutcomeRegression;
      config.regression_backend = backend;
      config.outcome_formula = o ? o1 : o0;
      out.push_back({fmt::format("{}-OR{}", backend == Backend::Frailty ? "frailty" : "marginal", o), config});
    }
  }
  auto km = base();
  km.method = Method::KaplanMeier;
  out.push_back({"KM", km});
  return out;
}

std::vector<Strategy> select_strategies(const ScenarioSpec& spec, const std::vector<std::string>& names) {
  const auto all = study_strategies(spec);
  std::vector<Strategy> out;
  for (const auto& name : names) {
    auto it = std::find_if(all.begin(), all.end(), [&](const Strategy& s) { return s.name == name; });
    if (it == all.end()) fail(ErrorKind::InvalidConfig, fmt::format("unknown strategy '{}'", name));
    out.push_back(*it);
  }
  return out;
}

const MetricsRow* MetricsTable::find(const std::string& strategy, Level level, Estimand estimand, Series series,
                                     double time) const {
  for (const auto& r : rows)
    if (r.strategy == strategy && r.level == level && r.estimand == estimand && r.series == series &&
        std::abs(r.time - time) <= 1e-12)
      return &r;
  return nullptr;
}

namespace {

std::string opt(const std::optional<double>& v, const char* spec) {
  return v ? fmt::format(fmt::runtime(spec), *v) : "";
}

}  // namespace

std::string MetricsTable::to_csv() const {
  std::string out = "strategy,level,estimand,series,time,truth,mean,pbias,mcsd,aese,cp,reps\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{},{}\n", r.strategy,
                       to_string(r.level), to_string(r.estimand), to_string(r.series), r.time, r.truth, r.mean,
                       r.pbias, r.mcsd, opt(r.aese, "{:.17g}"), opt(r.cp, "{:.17g}"), r.reps);
  return out;
}

std::string MetricsTable::to_text() const {
  std::string out = fmt::format("Simulation study: {} reps, variance = {}\n", reps, jackknife ? "jackknife" : "none");
  std::vector<const MetricsRow*> order;
  for (const auto& r : rows) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](const MetricsRow* a, const MetricsRow* b) {
    return std::tie(a->level, a->estimand, a->time, a->series) < std::tie(b->level, b->estimand, b->time, b->series);
  });
  std::string section;
  for (const MetricsRow* row : order) {
    const auto& r = *row;
    const std::string head = fmt::format("{}-level {}, {} at {:g}", to_string(r.level), to_string(r.estimand),
                                         to_string(r.series), r.time);
    if (head != section) {
      section = head;
      out += fmt::format("\n{} (truth {:.4f})\n", head, r.truth);
      out += fmt::format("  {:<16} {:>8} {:>8} {:>8} {:>6}\n", "strategy", "PBias", "MCSD", "AESE", "CP");
    }
    out += fmt::format("  {:<16} {:>8.3f} {:>8.3f} {:>8} {:>6}\n", r.strategy, r.pbias, r.mcsd,
                       r.aese ? fmt::format("{:.3f}", *r.aese) : "-", r.cp ? fmt::format("{:.3f}", *r.cp) : "-");
  }
  bool any_failure = false;
  for (const auto& [name, count] : failures) any_failure = any_failure || count > 0;
  if (any_failure) {
    out += "\nFailed reps:\n";
    for (const auto& [name, count] : failures)
      if (count) out += fmt::format("  {:<16} {}\n", name, count);
  }
  return out;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct RepResult {
  // Per strategy: values laid out [level][point][series], points = times then taus.
  std::vector<std::vector<double>> estimate;
  std::vector<std::vector<double>> variance;
  std::vector<std::string> error;
  std::size_t clusters = 0;
};

std::vector<double> to_series(const std::vector<double>& pairs) {
  std::vector<double> out;
  for (std::size_t s = 0; 2 * s + 1 < pairs.size(); ++s) {
    out.push_back(pairs[2 * s]);
    out.push_back(pairs[2 * s + 1]);
    out.push_back(pairs[2 * s] - pairs[2 * s + 1]);
  }
  return out;
}

std::string describe(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return fmt::format("{}: {}", to_string(err->kind()), e.what());
  return e.what();
}

}  // namespace

MetricsTable run_study(const ScenarioSpec& spec, const Truth& truth, const StudyOptions& options) {
  spec.validate();
  if (options.reps < 2) fail(ErrorKind::InvalidConfig, "a study needs at least 2 reps");
  if (options.times.empty() && options.taus.empty())
    fail(ErrorKind::InvalidConfig, "a study needs report times or RMST horizons");
  if (truth.population_hash != spec.population_hash())
    fail(ErrorKind::InvalidConfig, "truth was computed for a different scenario");

  auto strategies = options.strategies.empty() ? study_strategies(spec) : select_strategies(spec, options.strategies);
  for (auto& s : strategies) {
    s.config.times = options.times;
    s.config.taus = options.taus;
    s.config.dense_grid = !options.taus.empty();
  }
  const std::size_t n_strat = strategies.size();
  const std::size_t n_points = options.times.size() + options.taus.size();
  const std::size_t pair_width = 2 * 2 * n_points;
  bool needs_censoring = false;
  for (const auto& s : strategies)
    needs_censoring = needs_censoring || s.config.method == Method::Marginal || s.config.method == Method::Frailty;

  std::vector<RepResult> results(options.reps);
  const unsigned outer = options.threads;
  parallel_for(options.reps, outer, [&](std::size_t r) {
    RepResult& res = results[r];
    res.estimate.assign(n_strat, {});
    res.variance.assign(n_strat, {});
    res.error.assign(n_strat, "");
    SurvivalDataset ds;
    try {
      ds = generate(spec, derive_seed(options.seed, r));
    } catch (const std::exception& e) {
      res.error.assign(n_strat, describe(e));
      return;
    }
    res.clusters = ds.num_clusters();
    ModelCache cache;
    for (std::size_t s = 0; s < n_strat; ++s) {
      try {
        res.estimate[s] = to_series(estimate(ds, strategies[s].config, &cache).target_vector());
      } catch (const std::exception& e) {
        res.error[s] = describe(e);
      }
    }
    if (!options.jackknife) return;

    TargetPipeline pipeline = [&](const SurvivalDataset& sub) {
      std::vector<double> out(n_strat * pair_width, kNaN);
      ModelCache sub_cache;
      for (std::size_t s = 0; s < n_strat; ++s) {
        if (!res.error[s].empty()) continue;
        try {
          const auto v = estimate(sub, strategies[s].config, &sub_cache).target_vector();
          std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(s * pair_width));
        } catch (const Error&) {
        }
      }
      return out;
    };
    LeaveOneOutRequirements req;
    req.censoring_events = needs_censoring;
    Replicates reps;
    try {
      reps = leave_one_cluster_out(ds, pipeline, req, 1);
    } catch (const std::exception& e) {
      for (std::size_t s = 0; s < n_strat; ++s)
        if (res.error[s].empty()) res.error[s] = describe(e);
      return;
    }
    for (std::size_t s = 0; s < n_strat; ++s) {
      if (!res.error[s].empty()) continue;
      std::vector<double> var;
      for (std::size_t slot = 0; slot < 2 * n_points; ++slot) {
        const auto c1 = reps.column(s * pair_width + 2 * slot);
        const auto c0 = reps.column(s * pair_width + 2 * slot + 1);
        if (std::any_of(c1.begin(), c1.end(), [](double x) { return std::isnan(x); }) ||
            std::any_of(c0.begin(), c0.end(), [](double x) { return std::isnan(x); })) {
          res.error[s] = "a leave-one-cluster-out refit failed";
          break;
        }
        const Eigen::Matrix2d cov = covariance_matrix(c1, c0);
        var.push_back(cov(0, 0));
        var.push_back(cov(1, 1));
        var.push_back(difference_variance(cov));
      }
      if (res.error[s].empty()) res.variance[s] = std::move(var);
    }
  });

  MetricsTable table;
  table.reps = options.reps;
  table.jackknife = options.jackknife;
  std::string aborted;
  for (std::size_t s = 0; s < n_strat; ++s) {
    std::size_t failed = 0;
    for (const auto& res : results)
      if (!res.error[s].empty()) {
        if (failed == 0) table.failure_messages.push_back(fmt::format("{}: {}", strategies[s].name, res.error[s]));
        ++failed;
      }
    table.failures.emplace_back(strategies[s].name, failed);
    if (static_cast<double>(failed) > options.max_failure_fraction * static_cast<double>(options.reps))
      aborted += fmt::format(" {} failed in {} of {} reps ({});", strategies[s].name, failed, options.reps,
                             table.failure_messages.back());
  }
  if (!aborted.empty()) fail(ErrorKind::StudyAborted, "systematic failures:" + aborted);

  for (std::size_t s = 0; s < n_strat; ++s) {
    for (std::size_t lv = 0; lv < 2; ++lv) {
      for (std::size_t p = 0; p < n_points; ++p) {
        const bool spce = p < options.times.size();
        const double point = spce ? options.times[p] : options.taus[p - options.times.size()];
        for (std::size_t se = 0; se < 3; ++se) {
          const std::size_t idx = (lv * n_points + p) * 3 + se;
          MetricsRow row;
          row.strategy = strategies[s].name;
          row.level = static_cast<Level>(lv);
          row.estimand = spce ? Estimand::SPCE : Estimand::RMST;
          row.series = static_cast<Series>(se);
          row.time = point;
          row.truth = (spce ? truth.survival : truth.rmst).at(row.level, row.series, point);
          double sum = 0.0, sum_se = 0.0, covered = 0.0;
          std::vector<double> values;
          for (const auto& res : results) {
            if (!res.error[s].empty()) continue;
            const double v = res.estimate[s][idx];
            values.push_back(v);
            sum += v;
            if (options.jackknife) {
              const double sd = std::sqrt(std::max(0.0, res.variance[s][idx]));
              const double q = student_t_quantile(1.0 - options.alpha / 2.0, jackknife_df(res.clusters));
              sum_se += sd;
              covered += (v - q * sd <= row.truth && row.truth <= v + q * sd) ? 1.0 : 0.0;
            }
          }
          row.reps = values.size();
          if (values.empty()) continue;
          const double n = static_cast<double>(values.size());
          row.mean = sum / n;
          row.pbias = std::abs(row.mean - row.truth) / std::abs(row.truth) * 100.0;
          double ss = 0.0;
          for (double v : values) ss += (v - row.mean) * (v - row.mean);
          row.mcsd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
          if (options.jackknife) {
            row.aese = sum_se / n;
            row.cp = covered / n;
          }
          table.rows.push_back(row);
        }
      }
    }
  }
  return table;
}

}  // namespace drcrt
