#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace drcrt {

/// Aggregation level of the estimand: cluster-level (each cluster weighs
/// equally) or individual-level (each subject weighs equally).
enum class Level { Cluster = 0, Individual = 1 };
std::string_view to_string(Level level);

enum class EffectScale { Difference, Ratio };
std::string_view to_string(EffectScale scale);

/// Right-continuous step curve given at increasing grid times.
struct SurvivalCurve {
  std::vector<double> times;
  std::vector<double> values;

  /// Value at the largest grid time <= t (1 before the first grid time).
  double at(double t) const;
  std::size_t size() const { return times.size(); }
};

/// f(x, y): x - y or x / y. Throws RatioDenominatorZero for y == 0 on the ratio scale.
double apply_scale(EffectScale scale, double x, double y);

double effect_spce(const SurvivalCurve& arm1, const SurvivalCurve& arm0, EffectScale scale, double t);

struct RmstValue {
  double value = 0.0;
  bool extrapolated = false;  // tau lay beyond the grid and the curve was step-extended
};

/// Trapezoid sum_k (u_{k+1} - u_k)/2 (S(u_k) + S(u_{k+1})) over the grid
/// restricted to [0, tau]; tau is added by step evaluation when absent.
/// Past the grid end the last value is carried forward unless
/// `allow_extrapolation` is false, in which case TauBeyondGrid is thrown.
RmstValue rmst_from_curve(const SurvivalCurve& curve, double tau, bool allow_extrapolation = true);

/// Trapezoid on raw arrays; `grid` must start at 0 and contain tau.
double trapezoid(std::span<const double> grid, std::span<const double> values, double tau);

}  // namespace drcrt
