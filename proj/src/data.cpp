#include "drcrt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "drcrt/error.hpp"

namespace drcrt {

std::span<const double> SurvivalDataset::subject_covariates(std::size_t s) const {
  const std::size_t p = subject_names_.size();
  return std::span<const double>(z_).subspan(s * p, p);
}

std::optional<ColumnRef> SurvivalDataset::find_column(const std::string& name) const {
  for (std::size_t k = 0; k < cluster_names_.size(); ++k)
    if (cluster_names_[k] == name) return ColumnRef{ColumnLevel::Cluster, k};
  for (std::size_t k = 0; k < subject_names_.size(); ++k)
    if (subject_names_[k] == name) return ColumnRef{ColumnLevel::Subject, k};
  return std::nullopt;
}

double SurvivalDataset::column_value(const ColumnRef& ref, std::size_t s) const {
  if (ref.level == ColumnLevel::Cluster) return clusters_[cluster_of_[s]].covariates[ref.index];
  return z_[s * subject_names_.size() + ref.index];
}

std::vector<std::size_t> SurvivalDataset::subjects_in_arm(int arm) const {
  std::vector<std::size_t> out;
  for (const auto& c : clusters_) {
    if (c.arm != arm) continue;
    for (std::size_t s = c.first; s < c.first + c.size; ++s) out.push_back(s);
  }
  return out;
}

std::size_t SurvivalDataset::clusters_in_arm(int arm) const {
  return static_cast<std::size_t>(
      std::count_if(clusters_.begin(), clusters_.end(), [arm](const Cluster& c) { return c.arm == arm; }));
}

void SurvivalDataset::validate(const DatasetOptions& options) const {
  if (clusters_.size() < options.min_clusters)
    fail(ErrorKind::InvalidData,
         fmt::format("dataset has {} clusters; at least {} required", clusters_.size(), options.min_clusters));
  bool arm_seen[2] = {false, false};
  bool event_seen[2] = {false, false};
  for (const auto& c : clusters_) {
    if (c.arm != 0 && c.arm != 1)
      fail(ErrorKind::NonBinaryArm, fmt::format("cluster '{}' has arm {}", c.id, c.arm));
    if (c.size == 0) fail(ErrorKind::InvalidData, fmt::format("cluster '{}' has no subjects", c.id));
    if (c.covariates.size() != cluster_names_.size())
      fail(ErrorKind::InvalidData, fmt::format("cluster '{}' has wrong covariate count", c.id));
    arm_seen[c.arm] = true;
    for (std::size_t s = c.first; s < c.first + c.size; ++s) {
      if (!(time_[s] >= 0.0) || !std::isfinite(time_[s]))
        fail(ErrorKind::NegativeTime, fmt::format("cluster '{}' has observed time {}", c.id, time_[s]));
      if (event_[s] != 0 && event_[s] != 1)
        fail(ErrorKind::InvalidData, fmt::format("cluster '{}' has event indicator {}", c.id, event_[s]));
      if (event_[s] == 1) event_seen[c.arm] = true;
    }
  }
  if (options.require_both_arms && (!arm_seen[0] || !arm_seen[1]))
    fail(ErrorKind::SingleArmDataset, "both arms must be represented");
  if (options.require_events_per_arm && (!event_seen[0] || !event_seen[1]))
    fail(ErrorKind::InvalidData, "each arm needs at least one observed event");
}

SurvivalDataset SurvivalDataset::without_cluster(std::size_t g, const DatasetOptions& options) const {
  SurvivalDataset out;
  out.cluster_names_ = cluster_names_;
  out.subject_names_ = subject_names_;
  const std::size_t p = subject_names_.size();
  out.clusters_.reserve(clusters_.size() - 1);
  out.time_.reserve(time_.size());
  out.event_.reserve(time_.size());
  out.cluster_of_.reserve(time_.size());
  out.z_.reserve(z_.size());
  for (std::size_t i = 0; i < clusters_.size(); ++i) {
    if (i == g) continue;
    Cluster c = clusters_[i];
    const std::size_t old_first = c.first;
    c.first = out.time_.size();
    for (std::size_t s = old_first; s < old_first + c.size; ++s) {
      out.time_.push_back(time_[s]);
      out.event_.push_back(event_[s]);
      out.cluster_of_.push_back(out.clusters_.size());
      out.z_.insert(out.z_.end(), z_.begin() + static_cast<std::ptrdiff_t>(s * p),
                    z_.begin() + static_cast<std::ptrdiff_t>((s + 1) * p));
    }
    out.clusters_.push_back(std::move(c));
  }
  out.validate(options);
  return out;
}

DatasetBuilder::DatasetBuilder(std::vector<std::string> cluster_covariates,
                               std::vector<std::string> subject_covariates) {
  ds_.cluster_names_ = std::move(cluster_covariates);
  ds_.subject_names_ = std::move(subject_covariates);
}

DatasetBuilder& DatasetBuilder::add_cluster(std::string id, int arm, std::vector<double> covariates) {
  if (covariates.size() != ds_.cluster_names_.size())
    fail(ErrorKind::InvalidData, fmt::format("cluster '{}': expected {} cluster covariates, got {}", id,
                                             ds_.cluster_names_.size(), covariates.size()));
  Cluster c;
  c.id = std::move(id);
  c.arm = arm;
  c.covariates = std::move(covariates);
  c.first = ds_.time_.size();
  ds_.clusters_.push_back(std::move(c));
  return *this;
}

DatasetBuilder& DatasetBuilder::add_subject(double time, int event, std::span<const double> covariates) {
  if (ds_.clusters_.empty()) fail(ErrorKind::InvalidData, "add_subject called before add_cluster");
  if (covariates.size() != ds_.subject_names_.size())
    fail(ErrorKind::InvalidData, fmt::format("expected {} subject covariates, got {}",
                                             ds_.subject_names_.size(), covariates.size()));
  ds_.time_.push_back(time);
  ds_.event_.push_back(event);
  ds_.cluster_of_.push_back(ds_.clusters_.size() - 1);
  ds_.z_.insert(ds_.z_.end(), covariates.begin(), covariates.end());
  ds_.clusters_.back().size += 1;
  return *this;
}

DatasetBuilder& DatasetBuilder::add_subject(double time, int event, std::initializer_list<double> covariates) {
  return add_subject(time, event, std::span<const double>(covariates.begin(), covariates.size()));
}

SurvivalDataset DatasetBuilder::build(const DatasetOptions& options) && {
  ds_.validate(options);
  return std::move(ds_);
}

CsvSchema CsvSchema::for_dataset(const SurvivalDataset& ds) {
  CsvSchema schema;
  schema.cluster_covariates = ds.cluster_covariate_names();
  return schema;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

double parse_number(const std::string& text, const std::string& column, std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size())
    fail(ErrorKind::InvalidData, fmt::format("line {}: column '{}' value '{}' is not numeric", line_no, column, text));
  return v;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

}  // namespace

SurvivalDataset read_csv(std::istream& in, const CsvSchema& schema, const DatasetOptions& options) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) fail(ErrorKind::InvalidData, "CSV input is empty");

  auto column_index = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorKind::MissingColumn, fmt::format("required column '{}' not found", name));
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t i_cluster = column_index(schema.cluster);
  const std::size_t i_time = column_index(schema.time);
  const std::size_t i_event = column_index(schema.event);
  const std::size_t i_arm = column_index(schema.arm);

  std::vector<std::size_t> extra;
  for (std::size_t k = 0; k < header.size(); ++k)
    if (k != i_cluster && k != i_time && k != i_event && k != i_arm) extra.push_back(k);
  if (schema.cluster_covariates)
    for (const auto& name : *schema.cluster_covariates) column_index(name);

  struct Row {
    double time;
    int event;
    int arm;
    std::vector<double> values;  // extra columns
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Row>> by_cluster;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      fail(ErrorKind::InvalidData,
           fmt::format("line {}: expected {} fields, found {}", line_no, header.size(), fields.size()));
    Row row;
    row.time = parse_number(fields[i_time], schema.time, line_no);
    if (row.time < 0.0) fail(ErrorKind::NegativeTime, fmt::format("line {}: negative time {}", line_no, row.time));
    const double ev = parse_number(fields[i_event], schema.event, line_no);
    if (ev != 0.0 && ev != 1.0)
      fail(ErrorKind::InvalidData, fmt::format("line {}: event must be 0 or 1, found {}", line_no, fields[i_event]));
    row.event = static_cast<int>(ev);
    const double arm = parse_number(fields[i_arm], schema.arm, line_no);
    if (arm != 0.0 && arm != 1.0)
      fail(ErrorKind::NonBinaryArm, fmt::format("line {}: arm must be 0 or 1, found {}", line_no, fields[i_arm]));
    row.arm = static_cast<int>(arm);
    for (std::size_t k : extra) row.values.push_back(parse_number(fields[k], header[k], line_no));

    const std::string& id = fields[i_cluster];
    auto [it, inserted] = by_cluster.try_emplace(id);
    if (inserted) order.push_back(id);
    if (!it->second.empty() && it->second.front().arm != row.arm)
      fail(ErrorKind::ArmVariesWithinCluster, fmt::format("cluster '{}' has rows in both arms", id));
    it->second.push_back(std::move(row));
  }

  // Split extra columns into cluster- and subject-level.
  std::vector<bool> is_cluster_level(extra.size(), false);
  for (std::size_t e = 0; e < extra.size(); ++e) {
    const std::string& name = header[extra[e]];
    if (schema.cluster_covariates) {
      const auto& cc = *schema.cluster_covariates;
      is_cluster_level[e] = std::find(cc.begin(), cc.end(), name) != cc.end();
    } else {
      bool constant = true;
      for (const auto& id : order) {
        const auto& rows = by_cluster[id];
        for (const auto& r : rows)
          if (r.values[e] != rows.front().values[e]) constant = false;
      }
      is_cluster_level[e] = constant;
    }
  }
  std::vector<std::string> cluster_names, subject_names;
  for (std::size_t e = 0; e < extra.size(); ++e)
    (is_cluster_level[e] ? cluster_names : subject_names).push_back(header[extra[e]]);

  DatasetBuilder builder(cluster_names, subject_names);
  std::vector<double> w, z;
  for (const auto& id : order) {
    const auto& rows = by_cluster[id];
    w.clear();
    for (std::size_t e = 0; e < extra.size(); ++e) {
      if (!is_cluster_level[e]) continue;
      for (const auto& r : rows)
        if (r.values[e] != rows.front().values[e])
          fail(ErrorKind::InvalidData,
               fmt::format("cluster-level column '{}' varies within cluster '{}'", header[extra[e]], id));
      w.push_back(rows.front().values[e]);
    }
    builder.add_cluster(id, rows.front().arm, w);
    for (const auto& r : rows) {
      z.clear();
      for (std::size_t e = 0; e < extra.size(); ++e)
        if (!is_cluster_level[e]) z.push_back(r.values[e]);
      builder.add_subject(r.time, r.event, z);
    }
  }
  return std::move(builder).build(options);
}

SurvivalDataset load_csv(const std::string& path, const CsvSchema& schema, const DatasetOptions& options) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, fmt::format("cannot open '{}'", path));
  return read_csv(in, schema, options);
}

void write_csv(const SurvivalDataset& ds, std::ostream& out) {
  out << "cluster_id,time,event,arm";
  for (const auto& n : ds.cluster_covariate_names()) out << ',' << n;
  for (const auto& n : ds.subject_covariate_names()) out << ',' << n;
  out << '\n';
  for (const auto& c : ds.clusters()) {
    const std::string id = quote_if_needed(c.id);
    for (std::size_t s = c.first; s < c.first + c.size; ++s) {
      out << id << ',' << fmt::format("{}", ds.time(s)) << ',' << ds.event(s) << ',' << c.arm;
      for (double w : c.covariates) out << ',' << fmt::format("{}", w);
      for (double z : ds.subject_covariates(s)) out << ',' << fmt::format("{}", z);
      out << '\n';
    }
  }
}

void save_csv(const SurvivalDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, fmt::format("cannot write '{}'", path));
  write_csv(ds, out);
}

}  // namespace drcrt
