#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "drcrt/data.hpp"

namespace drcrt::testing {

/// Small seeded helper over mt19937_64 for hand-rolled generators.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  double normal(double mean = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mean, sd)(eng_); }
  double exponential(double rate) { return std::exponential_distribution<double>(rate)(eng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
  bool coin(double p = 0.5) { return uniform() < p; }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

struct MicroSpec {
  int clusters_per_arm = 3;
  int size_min = 2;
  int size_max = 6;
  double censoring_rate = 0.5;
  bool ties = false;  // round times to 0.1 so tied values occur
};

/// Random two-arm dataset with cluster column W and subject columns Z1, Z2.
/// Hazards depend on the covariates and a cluster-level random effect, and
/// both arms always contain events and censorings.
inline SurvivalDataset random_dataset(Gen& g, const MicroSpec& spec = {}) {
  for (;;) {
    DatasetBuilder b({"W"}, {"Z1", "Z2"});
    int id = 0;
    for (int arm = 1; arm >= 0; --arm) {
      for (int c = 0; c < spec.clusters_per_arm; ++c) {
        const double w = g.normal();
        b.add_cluster("k" + std::to_string(++id), arm, {w});
        const double frail = std::exp(0.5 * g.normal());
        const int n = g.integer(spec.size_min, spec.size_max);
        for (int j = 0; j < n; ++j) {
          const double z1 = g.normal(), z2 = g.coin() ? 1.0 : 0.0;
          const double rate = frail * std::exp(0.4 * w - 0.5 * z1 + 0.3 * z2 - 0.3 * arm);
          double t = g.exponential(rate);
          double c_time = g.exponential(rate * spec.censoring_rate / (1.0 - spec.censoring_rate + 1e-12));
          if (spec.ties) {
            t = std::ceil(t * 10.0) / 10.0;
            c_time = std::ceil(c_time * 10.0) / 10.0;
          }
          const int event = t <= c_time ? 1 : 0;
          b.add_subject(event ? t : c_time, event, {z1, z2});
        }
      }
    }
    auto ds = std::move(b).build();
    bool ok = true;
    for (int arm = 0; arm < 2; ++arm) {
      int events = 0, censored = 0;
      for (auto s : ds.subjects_in_arm(arm)) (ds.event(s) ? events : censored)++;
      ok = ok && events >= 2 && censored >= 2;
    }
    if (ok) return ds;
  }
}

/// Dataset from explicit rows: (cluster id, arm, time, event, z).
struct Row {
  std::string cluster;
  int arm;
  double time;
  int event;
  double z = 0.0;
};

inline SurvivalDataset dataset_from_rows(const std::vector<Row>& rows, const DatasetOptions& options = {}) {
  DatasetBuilder b({}, {"Z"});
  std::string current;
  for (const auto& r : rows) {
    if (r.cluster != current) {
      b.add_cluster(r.cluster, r.arm);
      current = r.cluster;
    }
    b.add_subject(r.time, r.event, {r.z});
  }
  return std::move(b).build(options);
}

}  // namespace drcrt::testing
