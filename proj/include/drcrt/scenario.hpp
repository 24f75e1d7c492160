#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>

#include "drcrt/formula.hpp"

namespace drcrt {

/// Data-generating process of a simulated two-arm cluster-randomized trial.
/// Q = (W1, W2, Z1, Z2, Z1*Z2, N/50);
///   event hazard     lambda0(a) g_lambda(N) B_a exp(beta_a a + beta'Q + beta_aN a N/50)
///   censoring hazard delta0 g_h(N) R exp(alpha'Q), capped at admin_cap
/// with lambda0(a) = rho0 - rho1 (1 - a) and B_a ~ Gamma(k_a, k_a), R ~ Gamma(k_c, k_c).
struct ScenarioSpec {
  std::string name = "custom";
  std::size_t clusters = 50;
  int size_min = 20;  // cluster size ~ discrete uniform [size_min, size_max]
  int size_max = 200;

  double w1_prob = 0.5;
  bool w2_size_mean = true;  // W2 mean N/50, otherwise w2_mean
  double w2_mean = 1.0;
  double w2_sd = 1.5;
  bool z1_size_mean = true;  // Z1 mean log(N)/5, otherwise z1_mean
  double z1_mean = 1.0;
  double z1_sd = 1.0;
  double z2_prob = 0.5;

  double beta_a = 0.0;
  std::array<double, 6> beta{};
  double beta_aN = 0.0;
  std::array<double, 6> alpha{};

  double rho0 = 0.5;
  double rho1 = 0.2;
  double delta0 = 0.2;
  bool g_lambda_size = false;  // g_lambda(N) = N/100, otherwise 1
  bool g_h_size = false;

  double frailty_shape_arm1 = 2.0;
  double frailty_shape_arm0 = 4.5;
  double frailty_shape_censoring = 9.5;
  double admin_cap = 5.0;
  double pi1 = 0.5;
  std::uint64_t seed = 20240601;

  /// Throws InvalidConfig on non-positive shapes or rates, M < 2 or a bad size range.
  void validate() const;

  double baseline_event(int arm, int n) const;
  double baseline_censoring(int n) const;

  /// Working model containing the true linear predictor's terms (plus log(N)
  /// when the baseline hazard scales with N).
  ModelFormula correct_formula(Role role) const;
  /// The correct formula without Z1*Z2 and cluster-size terms.
  ModelFormula misspecified_formula(Role role) const;

  /// Preset by name: 1, 2, 3, 3a (M = 26), 3b (25% censoring), 3c (75% censoring).
  static ScenarioSpec preset(const std::string& name);

  /// Flat `key = value` text; `#` starts a comment.
  std::string to_config() const;
  static ScenarioSpec from_config(std::istream& in);
  static ScenarioSpec load(const std::string& path);
  void save(const std::string& path) const;

  /// FNV-1a hash of every field that shapes the superpopulation (excludes M and seed).
  std::uint64_t population_hash() const;

  friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

std::uint64_t fnv1a(const std::string& text, std::uint64_t h = 14695981039346656037ull);

/// SplitMix64 finalizer of (master, index): independent stream seeds.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace drcrt
