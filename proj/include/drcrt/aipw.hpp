#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "drcrt/curve.hpp"
#include "drcrt/data.hpp"
#include "drcrt/oracle.hpp"

namespace drcrt {

/// Known randomization probabilities: pi(1) = pi1, pi(0) = 1 - pi1.
struct PropensitySpec {
  double pi1 = 0.5;
  double pi(int arm) const { return arm == 1 ? pi1 : 1.0 - pi1; }
  void validate() const;
};

enum class FloorPolicy { Truncate, Error };

struct AipwOptions {
  double censoring_floor = 1e-8;  // K_c below this is raised to it (Truncate) or rejected (Error)
  FloorPolicy floor_policy = FloorPolicy::Truncate;
  bool keep_subject_contributions = false;
};

/// The observed data of one subject together with its design rows for the
/// outcome and censoring models of the target arm.
struct SubjectObservation {
  double time = 0.0;
  int event = 0;
  int arm = 0;
  std::span<const double> v_outcome;
  std::span<const double> v_censoring;
};

/// Doubly robust contribution S_ij^(a)(t) of one subject for the oracle's arm:
///   I/(pi K(t)) 1{U >= t} - ((I - pi)/pi) S(t)
///     + (I/pi) S(t) sum_{u_k <= min(t,U)} dM_c(u_k) / (K(u_k) S(u_k))
/// with I = 1{A = a}, S(t) = P(T >= t | v), K the censoring survival and
/// dM_c(u) = 1{U = u, Delta = 0} - 1{U >= u} dH(u | v).
/// This is the direct reference evaluation; `estimate_arm` is the fast path.
double subject_contribution(const SubjectObservation& obs, const ConditionalSurvivalOracle& oracle,
                            const PropensitySpec& pi, double t, const AipwOptions& options = {},
                            std::size_t* floored = nullptr);

struct ArmEstimate {
  int arm = 0;
  std::vector<double> grid;
  std::array<std::vector<double>, 2> curve;  // [Level][grid index]
  std::vector<double> subject;               // N x G row-major, when kept
  std::size_t floored = 0;                   // K_c evaluations raised to the floor
};

/// Evaluates the contribution of every subject (both arms) on the grid and
/// aggregates: cluster level = mean over clusters of within-cluster means,
/// individual level = pooled mean. Summation runs in cluster, then subject order.
ArmEstimate estimate_arm(const SurvivalDataset& ds, const ConditionalSurvivalOracle& oracle,
                         const PropensitySpec& pi, std::span<const double> grid, const AipwOptions& options = {});

/// Per-arm curves at one level, as SurvivalCurve values on the grid.
std::array<SurvivalCurve, 2> estimate_survival(const SurvivalDataset& ds,
                                              const std::array<const ConditionalSurvivalOracle*, 2>& oracles,
                                              const PropensitySpec& pi, Level level, std::span<const double> grid,
                                              const AipwOptions& options = {});

/// Aggregates per-subject values (N x G row-major) to both levels.
std::array<std::vector<double>, 2> aggregate_subjects(const SurvivalDataset& ds, std::span<const double> values,
                                                      std::size_t columns);

/// Per-subject trapezoid integrals over [0, tau] of N x G contributions.
std::vector<double> subject_rmst(std::span<const double> grid, std::span<const double> values, double tau);

/// RMST effect from per-subject integrated contributions of each arm:
/// the difference of the aggregated per-subject differences, or the ratio of
/// the aggregated arm values.
double effect_rmst(const SurvivalDataset& ds, std::span<const double> rmst_arm1, std::span<const double> rmst_arm0,
                   EffectScale scale, Level level);

}  // namespace drcrt
