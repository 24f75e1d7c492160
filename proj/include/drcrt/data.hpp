#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace drcrt {

/// A randomized cluster. Subjects of the cluster occupy the contiguous
/// range [first, first + size) of the dataset's subject arrays.
struct Cluster {
  std::string id;
  int arm = 0;
  std::vector<double> covariates;  // W_i, ordered as SurvivalDataset::cluster_covariate_names()
  std::size_t first = 0;
  std::size_t size = 0;

  friend bool operator==(const Cluster&, const Cluster&) = default;
};

enum class ColumnLevel { Cluster, Subject };

struct ColumnRef {
  ColumnLevel level;
  std::size_t index;
};

struct DatasetOptions {
  /// Every arm must contain at least one observed event.
  bool require_events_per_arm = true;
  std::size_t min_clusters = 2;
  bool require_both_arms = true;
};

/// Clustered right-censored observations (U, Delta, A, W, Z). Immutable once built.
class SurvivalDataset {
 public:
  std::size_t num_clusters() const { return clusters_.size(); }
  std::size_t num_subjects() const { return time_.size(); }

  const std::vector<Cluster>& clusters() const { return clusters_; }
  const Cluster& cluster(std::size_t i) const { return clusters_[i]; }

  std::span<const double> times() const { return time_; }
  std::span<const int> events() const { return event_; }
  std::span<const std::size_t> cluster_index() const { return cluster_of_; }

  double time(std::size_t s) const { return time_[s]; }
  int event(std::size_t s) const { return event_[s]; }
  std::size_t cluster_of(std::size_t s) const { return cluster_of_[s]; }
  int arm_of(std::size_t s) const { return clusters_[cluster_of_[s]].arm; }
  std::size_t cluster_size_of(std::size_t s) const { return clusters_[cluster_of_[s]].size; }

  const std::vector<std::string>& cluster_covariate_names() const { return cluster_names_; }
  const std::vector<std::string>& subject_covariate_names() const { return subject_names_; }
  std::span<const double> subject_covariates(std::size_t s) const;

  std::optional<ColumnRef> find_column(const std::string& name) const;
  /// Value of a named covariate column for subject s (cluster-level columns broadcast).
  double column_value(const ColumnRef& ref, std::size_t s) const;

  /// Indices of subjects whose cluster received arm a, in storage order.
  std::vector<std::size_t> subjects_in_arm(int arm) const;
  std::size_t clusters_in_arm(int arm) const;

  /// Copy of the dataset with cluster g removed; validated with `options`.
  SurvivalDataset without_cluster(std::size_t g, const DatasetOptions& options = {}) const;

  friend bool operator==(const SurvivalDataset&, const SurvivalDataset&) = default;

 private:
  friend class DatasetBuilder;

  void validate(const DatasetOptions& options) const;

  std::vector<std::string> cluster_names_;
  std::vector<std::string> subject_names_;
  std::vector<Cluster> clusters_;
  std::vector<double> time_;
  std::vector<int> event_;
  std::vector<std::size_t> cluster_of_;
  std::vector<double> z_;  // row-major, num_subjects x subject_names_.size()
};

class DatasetBuilder {
 public:
  DatasetBuilder(std::vector<std::string> cluster_covariates,
                 std::vector<std::string> subject_covariates);

  DatasetBuilder& add_cluster(std::string id, int arm, std::vector<double> covariates = {});
  /// Appends a subject to the most recently added cluster.
  DatasetBuilder& add_subject(double time, int event, std::span<const double> covariates = {});
  DatasetBuilder& add_subject(double time, int event, std::initializer_list<double> covariates);

  std::size_t num_subjects() const { return ds_.time_.size(); }

  SurvivalDataset build(const DatasetOptions& options = {}) &&;

 private:
  SurvivalDataset ds_;
};

struct CsvSchema {
  std::string cluster = "cluster_id";
  std::string time = "time";
  std::string event = "event";
  std::string arm = "arm";
  /// Columns stored at cluster level. When unset, every extra column that is
  /// constant within all clusters is treated as cluster-level.
  std::optional<std::vector<std::string>> cluster_covariates;

  static CsvSchema for_dataset(const SurvivalDataset& ds);
};

SurvivalDataset read_csv(std::istream& in, const CsvSchema& schema = {},
                         const DatasetOptions& options = {});
SurvivalDataset load_csv(const std::string& path, const CsvSchema& schema = {},
                         const DatasetOptions& options = {});

/// Writes cluster_id,time,event,arm followed by cluster then subject covariates.
/// Reals are printed with 17 significant digits so a reload is exact.
void write_csv(const SurvivalDataset& ds, std::ostream& out);
void save_csv(const SurvivalDataset& ds, const std::string& path);

}  // namespace drcrt
