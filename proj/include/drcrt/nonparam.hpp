#pragma once

#include <array>
#include <span>
#include <vector>

#include "drcrt/curve.hpp"
#include "drcrt/data.hpp"

namespace drcrt {

struct HazardModel;

/// Weighted product-limit estimate at the distinct event times:
/// hazard_k = sum w dN / sum_{U >= t_k} w, survival_k = prod (1 - hazard).
struct ProductLimit {
  std::vector<double> times;
  std::vector<double> hazard;
  std::vector<double> survival;
};

ProductLimit weighted_product_limit(std::span<const double> time, std::span<const int> status,
                                    std::span<const double> weight);

enum class KmWeighting { ClusterInverseSize, Equal };

/// Product-limit curve of arm `arm`, with grid {0} followed by the event
/// times. Inverse-size weights target the cluster-level curve.
SurvivalCurve weighted_km(const SurvivalDataset& ds, int arm, KmWeighting weighting);

inline KmWeighting km_weighting_for(Level level) {
  return level == Level::Cluster ? KmWeighting::ClusterInverseSize : KmWeighting::Equal;
}

/// Mean of the outcome model's predictions P(T >= t | V) over every subject
/// of the dataset (both arms), averaged within then across clusters
/// (cluster level) or pooled (individual level).
double standardize_outcome_model(const HazardModel& outcome, const SurvivalDataset& ds, Level level,
                                 double t);

/// The same standardization for every grid time at once, for both levels.
/// Result [level][k].
std::array<std::vector<double>, 2> standardize_outcome_curve(const HazardModel& outcome,
                                                             const SurvivalDataset& ds,
                                                             std::span<const double> grid);

}  // namespace drcrt
