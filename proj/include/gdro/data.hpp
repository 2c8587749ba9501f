#ifndef GDRO_DATA_HPP
#define GDRO_DATA_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gdro/problem.hpp"
#include "gdro/rng.hpp"

namespace gdro {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised for malformed input files; the message names the row or group.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// m groups of labelled points sharing one feature dimension. Each group is
/// stored as a row-major matrix so that a sampled row is contiguous.
class GroupedDataset {
 public:
  struct Group {
    std::string name;
    RowMatrix features;
    Vector labels;
  };

  GroupedDataset() = default;

  explicit GroupedDataset(std::vector<Group> groups, std::vector<std::string> feature_names = {})
      : groups_(std::move(groups)), feature_names_(std::move(feature_names)) {
    if (groups_.empty()) throw std::invalid_argument("GroupedDataset: no groups");
    dim_ = static_cast<std::size_t>(groups_.front().features.cols());
    if (dim_ == 0) throw std::invalid_argument("GroupedDataset: zero feature dimension");
    for (const Group& g : groups_) {
      if (g.features.rows() == 0) throw IngestionError("empty group '" + g.name + "'");
      if (static_cast<std::size_t>(g.features.cols()) != dim_)
        throw std::invalid_argument("GroupedDataset: group '" + g.name + "' has a different feature dimension");
      if (g.labels.size() != g.features.rows())
        throw std::invalid_argument("GroupedDataset: label count mismatch in group '" + g.name + "'");
      for (Eigen::Index j = 0; j < g.labels.size(); ++j)
        if (g.labels(j) != 1.0 && g.labels(j) != -1.0)
          throw std::invalid_argument("GroupedDataset: labels must be +1 or -1");
    }
    if (!feature_names_.empty() && feature_names_.size() != dim_)
      throw std::invalid_argument("GroupedDataset: feature name count mismatch");
  }

  [[nodiscard]] std::size_t num_groups() const { return groups_.size(); }
  [[nodiscard]] std::size_t dim() const { return dim_; }
  [[nodiscard]] const Group& group(std::size_t i) const { return groups_.at(i); }
  [[nodiscard]] std::size_t group_size(std::size_t i) const { return static_cast<std::size_t>(groups_.at(i).features.rows()); }
  [[nodiscard]] const std::vector<std::string>& feature_names() const { return feature_names_; }

  [[nodiscard]] std::size_t total_points() const {
    std::size_t n = 0;
    for (const Group& g : groups_) n += static_cast<std::size_t>(g.features.rows());
    return n;
  }

  [[nodiscard]] DataPoint point(std::size_t group_index, std::size_t row) const {
    const Group& g = groups_.at(group_index);
    return {g.features.row(static_cast<Eigen::Index>(row)).transpose(), g.labels(static_cast<Eigen::Index>(row))};
  }

  /// FNV-1a over group names, sizes, and the bit patterns of every value.
  [[nodiscard]] std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto eat = [&h](std::uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xFFu;
        h *= 0x100000001b3ULL;
      }
    };
    eat(groups_.size());
    eat(dim_);
    for (const Group& g : groups_) {
      for (char c : g.name) eat(static_cast<unsigned char>(c));
      eat(static_cast<std::uint64_t>(g.features.rows()));
      for (Eigen::Index i = 0; i < g.features.size(); ++i) eat(std::bit_cast<std::uint64_t>(g.features.data()[i]));
      for (Eigen::Index i = 0; i < g.labels.size(); ++i) eat(std::bit_cast<std::uint64_t>(g.labels(i)));
    }
    return h;
  }

 private:
  std::vector<Group> groups_;
  std::vector<std::string> feature_names_;
  std::size_t dim_ = 0;
};

// ---------------------------------------------------------------------------
// Synthetic instances

/// Classifier direction theta*_i of group i in gen_synthetic: normalized N(0, I_n).
inline Vector synthetic_direction(std::size_t group, std::size_t n, std::uint64_t seed) {
  CounterRng dir_rng(seed, streams::kClassifierBase + group);
  Vector direction(static_cast<Eigen::Index>(n));
  do {
    for (Eigen::Index k = 0; k < direction.size(); ++k) direction(k) = dir_rng.normal();
  } while (direction.norm() == 0.0);
  return direction.normalized();
}

/// Per group i: a classifier theta*_i uniform on the unit sphere, then
/// `points_per_group` points a ~ N(0, I_n) labelled sign(a'theta*_i), each label
/// flipped with probability `flip_prob`. Group i draws from streams
/// (seed, kClassifierBase + i) and (seed, kDatasetBase + i).
inline GroupedDataset gen_synthetic(std::size_t m, std::size_t n, std::size_t points_per_group, double flip_prob,
                                    std::uint64_t seed) {
  if (m == 0 || n == 0 || points_per_group == 0)
    throw std::invalid_argument("gen_synthetic: m, n and points_per_group must be positive");
  if (!(flip_prob >= 0.0 && flip_prob < 0.5)) throw std::invalid_argument("gen_synthetic: flip_prob must lie in [0, 0.5)");
  std::vector<GroupedDataset::Group> groups;
  groups.reserve(m);
  const auto ni = static_cast<Eigen::Index>(n);
  for (std::size_t i = 0; i < m; ++i) {
    const Vector direction = synthetic_direction(i, n, seed);
    CounterRng rng(seed, streams::kDatasetBase + i);
    GroupedDataset::Group g;
    g.name = "group" + std::to_string(i);
    g.features.resize(static_cast<Eigen::Index>(points_per_group), ni);
    g.labels.resize(static_cast<Eigen::Index>(points_per_group));
    for (std::size_t j = 0; j < points_per_group; ++j) {
      const auto row = static_cast<Eigen::Index>(j);
      for (Eigen::Index k = 0; k < ni; ++k) g.features(row, k) = rng.normal();
      double label = g.features.row(row).dot(direction.transpose()) >= 0.0 ? 1.0 : -1.0;
      if (rng.bernoulli(flip_prob)) label = -label;
      g.labels(row) = label;
    }
    groups.push_back(std::move(g));
  }
  std::vector<std::string> names;
  for (std::size_t k = 0; k < n; ++k) names.push_back("x" + std::to_string(k));
  return GroupedDataset(std::move(groups), std::move(names));
}

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvSchema {
  std::string label_column;
  /// Label value mapped to +1; when empty, labels must be numeric in {0, 1} or {-1, +1}.
  std::string positive_label;
  std::vector<std::string> group_columns;
  std::vector<std::string> numeric_columns;
  std::vector<std::string> categorical_columns;
  bool standardize = true;
  bool add_intercept = false;

  friend bool operator==(const CsvSchema&, const CsvSchema&) = default;
};

/// Parses RFC 4180-style CSV text: comma-separated, optional double-quoted
/// fields with "" escapes. Returns rows with their 1-based starting line.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> parse_csv(std::string_view text) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t row_line = 1;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    const bool blank = row.size() == 1 && row.front().empty();
    if (!blank) rows.emplace_back(row_line, std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
      ++line;
      row_line = line;
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw IngestionError("unterminated quoted field starting on line " + std::to_string(row_line));
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t pos = 0;
  try {
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Per-column standardization applied during ingestion.
struct ColumnScaling {
  std::string column;
  double mean = 0.0;
  double stddev = 1.0;
};

struct CsvIngestResult {
  GroupedDataset dataset;
  std::vector<ColumnScaling> scaling;
  std::size_t rows = 0;
};

/// Loads a CSV file: categorical columns become sorted 0/1 indicators, numeric
/// columns are optionally standardized over the whole file, and rows are
/// partitioned by the cross product of the group columns' observed values.
inline CsvIngestResult load_csv_text(std::string_view text, const CsvSchema& schema) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw IngestionError("CSV input has no header row");
  std::vector<std::string> header;
  for (const auto& h : rows.front().second) header.push_back(detail::trim(h));
  auto column_index = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IngestionError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  if (schema.label_column.empty()) throw IngestionError("schema has no label column");
  if (schema.group_columns.empty()) throw IngestionError("schema has no group columns");
  if (schema.numeric_columns.empty() && schema.categorical_columns.empty() && !schema.add_intercept)
    throw IngestionError("schema has no feature columns");

  const std::size_t label_col = column_index(schema.label_column);
  std::vector<std::size_t> group_cols, numeric_cols, categorical_cols;
  for (const auto& c : schema.group_columns) group_cols.push_back(column_index(c));
  for (const auto& c : schema.numeric_columns) numeric_cols.push_back(column_index(c));
  for (const auto& c : schema.categorical_columns) categorical_cols.push_back(column_index(c));

  const std::size_t data_rows = rows.size() - 1;
  if (data_rows == 0) throw IngestionError("CSV input has no data rows");

  std::vector<std::set<std::string>> cat_levels(categorical_cols.size());
  std::vector<std::set<std::string>> group_levels(group_cols.size());
  std::vector<double> labels(data_rows);
  std::vector<std::vector<double>> numeric(data_rows, std::vector<double>(numeric_cols.size()));

  for (std::size_t r = 0; r < data_rows; ++r) {
    const auto& [line, fields] = rows[r + 1];
    if (fields.size() != header.size())
      throw IngestionError("row on line " + std::to_string(line) + " has " + std::to_string(fields.size()) +
                           " fields, header has " + std::to_string(header.size()));
    const std::string label_text = detail::trim(fields[label_col]);
    if (!schema.positive_label.empty()) {
      labels[r] = label_text == schema.positive_label ? 1.0 : -1.0;
    } else {
      const auto v = detail::parse_number(label_text);
      if (!v || !(*v == 0.0 || *v == 1.0 || *v == -1.0))
        throw IngestionError("line " + std::to_string(line) + ": label '" + label_text +
                             "' is not one of 0, 1, -1 (set positive_label for text labels)");
      labels[r] = *v > 0.0 ? 1.0 : -1.0;
    }
    for (std::size_t k = 0; k < numeric_cols.size(); ++k) {
      const std::string text_value = detail::trim(fields[numeric_cols[k]]);
      const auto v = detail::parse_number(text_value);
      if (!v)
        throw IngestionError("line " + std::to_string(line) + ": column '" + schema.numeric_columns[k] +
                             "' value '" + text_value + "' is not numeric");
      numeric[r][k] = *v;
    }
    for (std::size_t k = 0; k < categorical_cols.size(); ++k) cat_levels[k].insert(detail::trim(fields[categorical_cols[k]]));
    for (std::size_t k = 0; k < group_cols.size(); ++k) group_levels[k].insert(detail::trim(fields[group_cols[k]]));
  }

  std::vector<ColumnScaling> scaling;
  if (schema.standardize) {
    for (std::size_t k = 0; k < numeric_cols.size(); ++k) {
      double mean = 0.0;
      for (std::size_t r = 0; r < data_rows; ++r) mean += numeric[r][k];
      mean /= static_cast<double>(data_rows);
      double var = 0.0;
      for (std::size_t r = 0; r < data_rows; ++r) var += (numeric[r][k] - mean) * (numeric[r][k] - mean);
      var /= static_cast<double>(data_rows);
      const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
      scaling.push_back({schema.numeric_columns[k], mean, sd});
      for (std::size_t r = 0; r < data_rows; ++r) numeric[r][k] = (numeric[r][k] - mean) / sd;
    }
  }

  std::vector<std::string> feature_names = schema.numeric_columns;
  std::vector<std::map<std::string, std::size_t>> cat_offset(categorical_cols.size());
  for (std::size_t k = 0; k < categorical_cols.size(); ++k)
    for (const auto& level : cat_levels[k]) {
      cat_offset[k][level] = feature_names.size();
      feature_names.push_back(schema.categorical_columns[k] + "=" + level);
    }
  if (schema.add_intercept) feature_names.push_back("intercept");
  const std::size_t n = feature_names.size();

  // Cross product of observed group levels, in lexicographic order.
  std::vector<std::vector<std::string>> level_lists;
  for (const auto& s : group_levels) level_lists.emplace_back(s.begin(), s.end());
  std::size_t m = 1;
  for (const auto& l : level_lists) m *= l.size();
  auto group_of = [&](const std::vector<std::string>& fields) {
    std::size_t id = 0;
    for (std::size_t k = 0; k < group_cols.size(); ++k) {
      const auto& l = level_lists[k];
      const auto pos = std::lower_bound(l.begin(), l.end(), detail::trim(fields[group_cols[k]])) - l.begin();
      id = id * l.size() + static_cast<std::size_t>(pos);
    }
    return id;
  };
  auto group_name = [&](std::size_t id) {
    std::vector<std::string> parts(group_cols.size());
    for (std::size_t k = group_cols.size(); k-- > 0;) {
      const auto& l = level_lists[k];
      parts[k] = schema.group_columns[k] + "=" + l[id % l.size()];
      id /= l.size();
    }
    std::string out;
    for (std::size_t k = 0; k < parts.size(); ++k) out += (k ? "," : "") + parts[k];
    return out;
  };

  std::vector<std::vector<std::size_t>> members(m);
  for (std::size_t r = 0; r < data_rows; ++r) members[group_of(rows[r + 1].second)].push_back(r);
  for (std::size_t g = 0; g < m; ++g)
    if (members[g].empty()) throw IngestionError("empty group '" + group_name(g) + "' after partitioning");

  std::vector<GroupedDataset::Group> groups;
  for (std::size_t g = 0; g < m; ++g) {
    GroupedDataset::Group grp;
    grp.name = group_name(g);
    grp.features = RowMatrix::Zero(static_cast<Eigen::Index>(members[g].size()), static_cast<Eigen::Index>(n));
    grp.labels.resize(static_cast<Eigen::Index>(members[g].size()));
    for (std::size_t j = 0; j < members[g].size(); ++j) {
      const std::size_t r = members[g][j];
      const auto row = static_cast<Eigen::Index>(j);
      const auto& fields = rows[r + 1].second;
      for (std::size_t k = 0; k < numeric_cols.size(); ++k) grp.features(row, static_cast<Eigen::Index>(k)) = numeric[r][k];
      for (std::size_t k = 0; k < categorical_cols.size(); ++k)
        grp.features(row, static_cast<Eigen::Index>(cat_offset[k].at(detail::trim(fields[categorical_cols[k]])))) = 1.0;
      if (schema.add_intercept) grp.features(row, static_cast<Eigen::Index>(n - 1)) = 1.0;
      grp.labels(row) = labels[r];
    }
    groups.push_back(std::move(grp));
  }
  return {GroupedDataset(std::move(groups), std::move(feature_names)), std::move(scaling), data_rows};
}

inline CsvIngestResult load_csv_dataset(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_csv_text(ss.str(), schema);
}

/// Writes `group,label,<features...>` rows with round-trip precision; readable
/// back with group_columns = {"group"} and standardize = false.
inline void write_dataset_csv(const GroupedDataset& data, std::ostream& out) {
  out << "group,label";
  for (std::size_t k = 0; k < data.dim(); ++k)
    out << ',' << (data.feature_names().empty() ? "x" + std::to_string(k) : data.feature_names()[k]);
  out << '\n';
  char buf[40];
  for (std::size_t g = 0; g < data.num_groups(); ++g) {
    const auto& grp = data.group(g);
    for (Eigen::Index r = 0; r < grp.features.rows(); ++r) {
      out << '"' << grp.name << '"' << ',' << (grp.labels(r) > 0 ? "1" : "-1");
      for (Eigen::Index k = 0; k < grp.features.cols(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", grp.features(r, k));
        out << ',' << buf;
      }
      out << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Stochastic oracle

/// Index of one uniform draw (with replacement) from a group.
inline std::size_t oracle_sample_index(const GroupedDataset& data, std::size_t group_index, CounterRng& rng) {
  if (group_index >= data.num_groups()) throw std::out_of_range("oracle_sample: group index out of range");
  return static_cast<std::size_t>(rng.uniform_index(data.group_size(group_index)));
}

/// `batch_size` i.i.d. uniform draws with replacement from one group.
inline std::vector<DataPoint> oracle_sample(const GroupedDataset& data, std::size_t group_index, std::size_t batch_size,
                                            CounterRng& rng) {
  std::vector<DataPoint> batch;
  batch.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b)
    batch.push_back(data.point(group_index, oracle_sample_index(data, group_index, rng)));
  return batch;
}

}  // namespace gdro

#endif
