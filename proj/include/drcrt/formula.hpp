#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "drcrt/data.hpp"

namespace drcrt {

enum class Role { Outcome, Censoring };

std::string_view to_string(Role role);

/// One multiplicative factor of a model term.
struct Factor {
  enum class Kind {
    Column,          // a named W or Z column
    ClusterSize,     // N_i
    LogClusterSize,  // log(N_i)
    ClusterMean,     // within-cluster mean of a subject column
  };
  Kind kind = Kind::Column;
  std::string column;
  double divisor = 1.0;

  friend bool operator==(const Factor&, const Factor&) = default;
};

/// A product of factors, e.g. `Z1*Z2`, `N/50` or `mean(Z1)`.
struct Term {
  std::vector<Factor> factors;
  std::string label;

  friend bool operator==(const Term&, const Term&) = default;
};

/// Right-hand side of a working hazard model. Terms are evaluated in the
/// declared order; an empty formula gives a baseline-only fit.
class ModelFormula {
 public:
  ModelFormula() = default;
  ModelFormula(Role role, std::vector<Term> terms) : role_(role), terms_(std::move(terms)) {}

  /// Parses `W1 + W2 + Z1*Z2 + N/50 + log(N) + mean(Z1)`. An empty string or
  /// `1` yields no terms.
  static ModelFormula parse(const std::string& rhs, Role role = Role::Outcome);

  Role role() const { return role_; }
  const std::vector<Term>& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  std::string to_string() const;

  ModelFormula with_role(Role role) const { return ModelFormula(role, terms_); }

  friend bool operator==(const ModelFormula&, const ModelFormula&) = default;

 private:
  Role role_ = Role::Outcome;
  std::vector<Term> terms_;
};

using DesignMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Evaluates the formula for every subject of the dataset (storage order).
DesignMatrix build_design(const SurvivalDataset& ds, const ModelFormula& formula);

/// Evaluates the formula for the listed subjects only.
DesignMatrix build_design(const SurvivalDataset& ds, const ModelFormula& formula,
                          std::span<const std::size_t> subjects);

/// Throws UnknownTerm if any referenced column is absent from the dataset.
void check_resolvable(const SurvivalDataset& ds, const ModelFormula& formula);

}  // namespace drcrt
