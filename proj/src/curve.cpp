#include "drcrt/curve.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "drcrt/error.hpp"

namespace drcrt {

std::string_view to_string(Level level) { return level == Level::Cluster ? "cluster" : "individual"; }
std::string_view to_string(EffectScale scale) { return scale == EffectScale::Difference ? "difference" : "ratio"; }

double SurvivalCurve::at(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  return it == times.begin() ? 1.0 : values[static_cast<std::size_t>(it - times.begin()) - 1];
}

double apply_scale(EffectScale scale, double x, double y) {
  if (scale == EffectScale::Difference) return x - y;
  if (y == 0.0) fail(ErrorKind::RatioDenominatorZero, "ratio effect with zero control-arm value");
  return x / y;
}

double effect_spce(const SurvivalCurve& arm1, const SurvivalCurve& arm0, EffectScale scale, double t) {
  return apply_scale(scale, arm1.at(t), arm0.at(t));
}

double trapezoid(std::span<const double> grid, std::span<const double> values, double tau) {
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < grid.size() && grid[k + 1] <= tau; ++k)
    area += (grid[k + 1] - grid[k]) / 2.0 * (values[k] + values[k + 1]);
  return area;
}

RmstValue rmst_from_curve(const SurvivalCurve& curve, double tau, bool allow_extrapolation) {
  if (curve.times.empty() || curve.times.front() != 0.0)
    fail(ErrorKind::InvalidConfig, "RMST needs a curve whose grid starts at 0");
  RmstValue out;
  if (tau > curve.times.back()) {
    if (!allow_extrapolation)
      fail(ErrorKind::TauBeyondGrid, fmt::format("tau = {} lies beyond the curve grid (last time {})", tau, curve.times.back()));
    out.extrapolated = true;
  }
  std::vector<double> grid, values;
  for (std::size_t k = 0; k < curve.size() && curve.times[k] <= tau; ++k) {
    grid.push_back(curve.times[k]);
    values.push_back(curve.values[k]);
  }
  if (grid.back() < tau) {
    grid.push_back(tau);
    values.push_back(curve.at(tau));
  }
  out.value = trapezoid(grid, values, tau);
  return out;
}

}  // namespace drcrt
