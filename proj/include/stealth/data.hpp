#pragma once

// Tabular data: schema, CSV ingestion, numeric encoding, the 40:40:20
// Train1/Train2/Test split, and a synthetic biased-data generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stealth/error.hpp"
#include "stealth/random.hpp"

namespace stealth {

enum class FeatureKind { numeric, categorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::numeric;
};

/// Maps a raw cell to privileged / unprivileged. A value is privileged when
/// it is listed in `privileged_values`, or, if `privileged_at_least` is set,
/// when it parses as a number >= that bound. Everything else is
/// unprivileged, so the predicate is total.
struct ProtectedSpec {
  std::string name;
  std::vector<std::string> privileged_values;
  std::optional<double> privileged_at_least;

  bool is_privileged(std::string_view raw) const {
    for (const auto& v : privileged_values)
      if (v == raw) return true;
    if (privileged_at_least) {
      std::string s(raw);
      char* end = nullptr;
      const double x = std::strtod(s.c_str(), &end);
      if (end != s.c_str() && *end == '\0') return x >= *privileged_at_least;
    }
    return false;
  }
};

struct Schema {
  std::vector<FeatureSpec> features;
  std::string class_name;
  std::string favorable;
  std::vector<ProtectedSpec> protected_attributes;

  std::optional<std::size_t> feature_index(std::string_view name) const {
    for (std::size_t i = 0; i < features.size(); ++i)
      if (features[i].name == name) return i;
    return std::nullopt;
  }

  const ProtectedSpec* find_protected(std::string_view name) const {
    for (const auto& p : protected_attributes)
      if (p.name == name) return &p;
    return nullptr;
  }

  void validate() const {
    if (features.empty()) throw SchemaError("schema declares no features");
    if (class_name.empty()) throw SchemaError("schema declares no class column");
    if (feature_index(class_name))
      throw SchemaError("class column '" + class_name + "' is listed as a feature");
    for (std::size_t i = 0; i < features.size(); ++i)
      for (std::size_t j = i + 1; j < features.size(); ++j)
        if (features[i].name == features[j].name)
          throw SchemaError("duplicate feature '" + features[i].name + "'");
    for (const auto& p : protected_attributes)
      if (!feature_index(p.name))
        throw SchemaError("protected attribute '" + p.name + "' is not a feature");
  }

  static Schema from_json(const nlohmann::json& j) {
    Schema s;
    try {
      for (const auto& f : j.at("features")) {
        FeatureSpec spec;
        spec.name = f.at("name").get<std::string>();
        const auto kind = f.value("kind", std::string("numeric"));
        if (kind == "numeric")
          spec.kind = FeatureKind::numeric;
        else if (kind == "categorical")
          spec.kind = FeatureKind::categorical;
        else
          throw SchemaError("feature '" + spec.name + "': unknown kind '" + kind + "'");
        s.features.push_back(std::move(spec));
      }
      const auto& cls = j.at("class");
      s.class_name = cls.at("name").get<std::string>();
      s.favorable = json_scalar_string(cls.at("favorable"));
      if (j.contains("protected")) {
        for (const auto& p : j.at("protected")) {
          ProtectedSpec spec;
          spec.name = p.at("name").get<std::string>();
          if (p.contains("privileged"))
            for (const auto& v : p.at("privileged"))
              spec.privileged_values.push_back(json_scalar_string(v));
          if (p.contains("privileged_at_least"))
            spec.privileged_at_least = p.at("privileged_at_least").get<double>();
          s.protected_attributes.push_back(std::move(spec));
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("malformed schema: ") + e.what());
    }
    s.validate();
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["features"] = nlohmann::json::array();
    for (const auto& f : features)
      j["features"].push_back(
          {{"name", f.name},
           {"kind", f.kind == FeatureKind::numeric ? "numeric" : "categorical"}});
    j["class"] = {{"name", class_name}, {"favorable", favorable}};
    j["protected"] = nlohmann::json::array();
    for (const auto& p : protected_attributes) {
      nlohmann::json pj = {{"name", p.name}, {"privileged", p.privileged_values}};
      if (p.privileged_at_least) pj["privileged_at_least"] = *p.privileged_at_least;
      j["protected"].push_back(std::move(pj));
    }
    return j;
  }

 private:
  static std::string json_scalar_string(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }
};

inline Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("schema '" + path + "' is not valid JSON: " + e.what());
  }
  return Schema::from_json(j);
}

/// Parsed but not yet encoded rows. Cells keep their textual form, one
/// vector per row in schema feature order.
struct RawDataset {
  std::vector<std::string> feature_names;
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> labels;
  std::size_t dropped_rows = 0;

  std::size_t rows() const { return cells.size(); }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// RFC-4180 style: fields may be double-quoted, "" escapes a quote.
inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
      was_quoted = true;
    } else if (ch == ',') {
      out.push_back(was_quoted ? field : trim(field));
      field.clear();
      was_quoted = false;
    } else {
      field += ch;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", line_no);
  out.push_back(was_quoted ? field : trim(field));
  return out;
}

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Reads a header-first CSV and keeps the schema's columns. Rows with any
/// empty cell are dropped and counted in `dropped_rows`.
inline RawDataset read_csv(std::istream& in, const Schema& schema) {
  schema.validate();
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(line, line_no);
      break;
    }
  }
  if (header.empty()) throw ParseError("missing header row", line_no);
  if (!header.empty() && header[0].size() >= 3 && header[0].compare(0, 3, "\xEF\xBB\xBF") == 0)
    header[0] = header[0].substr(3);

  auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("CSV header lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> feature_cols;
  for (const auto& f : schema.features) feature_cols.push_back(column_of(f.name));
  const std::size_t class_col = column_of(schema.class_name);

  RawDataset raw;
  for (const auto& f : schema.features) raw.feature_names.push_back(f.name);
  std::vector<std::string> distinct_labels;

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line, line_no);
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    if (std::any_of(fields.begin(), fields.end(), [](const auto& c) { return c.empty(); })) {
      ++raw.dropped_rows;
      continue;
    }
    std::vector<std::string> row;
    row.reserve(feature_cols.size());
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      auto& cell = fields[feature_cols[k]];
      if (schema.features[k].kind == FeatureKind::numeric &&
          !schema.find_protected(schema.features[k].name) && !detail::parse_number(cell))
        throw ParseError("column '" + schema.features[k].name + "': '" + cell +
                             "' is not numeric",
                         line_no);
      row.push_back(std::move(cell));
    }
    auto& label = fields[class_col];
    if (std::find(distinct_labels.begin(), distinct_labels.end(), label) ==
        distinct_labels.end()) {
      distinct_labels.push_back(label);
      if (distinct_labels.size() > 2)
        throw SchemaError("class column '" + schema.class_name +
                          "' has more than two values (line " + std::to_string(line_no) + ")");
    }
    raw.cells.push_back(std::move(row));
    raw.labels.push_back(std::move(label));
  }
  if (distinct_labels.size() == 2 &&
      std::find(distinct_labels.begin(), distinct_labels.end(), schema.favorable) ==
          distinct_labels.end())
    throw SchemaError("favorable label '" + schema.favorable + "' never occurs in '" +
                      schema.class_name + "'");
  return raw;
}

inline RawDataset load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV file '" + path + "'");
  return read_csv(in, schema);
}

/// Privileged flags of one protected attribute, one entry per row.
struct GroupTags {
  std::string name;
  std::size_t column = 0;
  std::vector<std::uint8_t> privileged;
};

/// Encoded numeric data. Values are row-major; every column lies in [0,1].
/// Protected columns hold the privileged flag itself (1 privileged, 0 not).
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<std::string> feature_names, std::vector<double> values,
          std::optional<std::vector<int>> labels = std::nullopt,
          std::vector<GroupTags> groups = {})
      : names_(std::move(feature_names)),
        values_(std::move(values)),
        labels_(std::move(labels)),
        groups_(std::move(groups)) {
    if (names_.empty()) throw ContractError("dataset needs at least one feature");
    if (values_.size() % names_.size() != 0)
      throw ContractError("value count is not a multiple of the feature count");
    if (labels_) {
      if (labels_->size() != rows()) throw ContractError("label count differs from row count");
      for (int y : *labels_)
        if (y != 0 && y != 1) throw ContractError("labels must be 0 or 1");
    }
    for (const auto& g : groups_) {
      if (g.privileged.size() != rows())
        throw ContractError("group tag count differs from row count");
      if (g.column >= cols()) throw ContractError("group column out of range");
    }
  }

  std::size_t rows() const { return names_.empty() ? 0 : values_.size() / names_.size(); }
  std::size_t cols() const { return names_.size(); }
  bool empty() const { return rows() == 0; }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * cols(), cols()};
  }
  double at(std::size_t i, std::size_t j) const { return values_[i * cols() + j]; }
  std::span<const double> values() const { return values_; }

  const std::vector<std::string>& feature_names() const { return names_; }
  std::optional<std::size_t> feature_index(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    return std::nullopt;
  }

  bool has_labels() const { return labels_.has_value(); }
  std::span<const int> labels() const {
    if (!labels_) throw ContractError("dataset is unlabeled");
    return *labels_;
  }

  const std::vector<GroupTags>& groups() const { return groups_; }
  const GroupTags& group(std::string_view name) const {
    for (const auto& g : groups_)
      if (g.name == name) return g;
    throw ContractError("'" + std::string(name) + "' is not a protected attribute");
  }
  bool is_protected_column(std::size_t col) const {
    return std::any_of(groups_.begin(), groups_.end(),
                       [col](const auto& g) { return g.column == col; });
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    std::vector<double> v;
    v.reserve(idx.size() * cols());
    for (auto i : idx) {
      const auto r = row(i);
      v.insert(v.end(), r.begin(), r.end());
    }
    std::optional<std::vector<int>> l;
    if (labels_) {
      l.emplace();
      l->reserve(idx.size());
      for (auto i : idx) l->push_back((*labels_)[i]);
    }
    std::vector<GroupTags> g = groups_;
    for (std::size_t k = 0; k < g.size(); ++k) {
      g[k].privileged.clear();
      for (auto i : idx) g[k].privileged.push_back(groups_[k].privileged[i]);
    }
    return Dataset(names_, std::move(v), std::move(l), std::move(g));
  }

  Dataset without_labels() const { return Dataset(names_, values_, std::nullopt, groups_); }
  Dataset with_labels(std::vector<int> labels) const {
    return Dataset(names_, values_, std::move(labels), groups_);
  }

  /// Population standard deviation of each column.
  std::vector<double> column_std() const {
    std::vector<double> mean(cols(), 0.0), sd(cols(), 0.0);
    const auto n = static_cast<double>(rows());
    if (rows() == 0) return sd;
    for (std::size_t i = 0; i < rows(); ++i)
      for (std::size_t j = 0; j < cols(); ++j) mean[j] += at(i, j);
    for (auto& m : mean) m /= n;
    for (std::size_t i = 0; i < rows(); ++i)
      for (std::size_t j = 0; j < cols(); ++j) sd[j] += (at(i, j) - mean[j]) * (at(i, j) - mean[j]);
    for (auto& s : sd) s = std::sqrt(s / n);
    return sd;
  }

 private:
  std::vector<std::string> names_;
  std::vector<double> values_;
  std::optional<std::vector<int>> labels_;
  std::vector<GroupTags> groups_;
};

/// Min-max scales each column of a row-major matrix in place. Constant
/// columns become 0.
inline void minmax_columns(std::vector<double>& values, std::size_t cols,
                           std::span<const std::uint8_t> skip = {}) {
  if (cols == 0 || values.empty()) return;
  const std::size_t rows = values.size() / cols;
  for (std::size_t j = 0; j < cols; ++j) {
    if (!skip.empty() && skip[j]) continue;
    double lo = values[j], hi = values[j];
    for (std::size_t i = 1; i < rows; ++i) {
      lo = std::min(lo, values[i * cols + j]);
      hi = std::max(hi, values[i * cols + j]);
    }
    const double range = hi - lo;
    for (std::size_t i = 0; i < rows; ++i) {
      auto& v = values[i * cols + j];
      v = range > 0 ? (v - lo) / range : 0.0;
    }
  }
}

/// Encodes a raw table: categoricals get integer codes in first-appearance
/// order, protected attributes become their privileged flag, the class maps
/// to 1 (favorable) / 0, and every non-protected column is min-max scaled.
inline Dataset encode_normalize(const RawDataset& raw, const Schema& schema) {
  schema.validate();
  const std::size_t cols = schema.features.size();
  if (raw.feature_names.size() != cols) throw SchemaError("raw table does not match schema");
  std::vector<double> values(raw.rows() * cols, 0.0);
  std::vector<std::uint8_t> skip(cols, 0);
  std::vector<GroupTags> groups;

  for (std::size_t j = 0; j < cols; ++j) {
    const auto& spec = schema.features[j];
    if (const auto* p = schema.find_protected(spec.name)) {
      skip[j] = 1;
      GroupTags tags{p->name, j, {}};
      tags.privileged.reserve(raw.rows());
      for (std::size_t i = 0; i < raw.rows(); ++i) {
        const bool priv = p->is_privileged(raw.cells[i][j]);
        tags.privileged.push_back(priv ? 1 : 0);
        values[i * cols + j] = priv ? 1.0 : 0.0;
      }
      groups.push_back(std::move(tags));
    } else if (spec.kind == FeatureKind::categorical) {
      std::unordered_map<std::string, double> codes;
      for (std::size_t i = 0; i < raw.rows(); ++i) {
        const auto [it, inserted] =
            codes.try_emplace(raw.cells[i][j], static_cast<double>(codes.size()));
        values[i * cols + j] = it->second;
      }
    } else {
      for (std::size_t i = 0; i < raw.rows(); ++i) {
        const auto v = detail::parse_number(raw.cells[i][j]);
        if (!v) throw SchemaError("column '" + spec.name + "' holds non-numeric '" +
                                  raw.cells[i][j] + "'");
        values[i * cols + j] = *v;
      }
    }
  }
  minmax_columns(values, cols, skip);

  std::vector<int> labels;
  labels.reserve(raw.rows());
  for (const auto& l : raw.labels) labels.push_back(l == schema.favorable ? 1 : 0);

  // Protected attributes come out in schema order.
  std::vector<GroupTags> ordered;
  for (const auto& p : schema.protected_attributes)
    for (auto& g : groups)
      if (g.name == p.name) ordered.push_back(std::move(g));
  return Dataset(raw.feature_names, std::move(values), std::move(labels), std::move(ordered));
}

inline Dataset load_dataset(const std::string& csv_path, const Schema& schema) {
  return encode_normalize(load_csv(csv_path, schema), schema);
}

/// Re-applies min-max scaling to the non-protected columns of an encoded
/// dataset. A no-op on data that already spans [0,1] per column.
inline Dataset renormalize(const Dataset& ds) {
  std::vector<double> v(ds.values().begin(), ds.values().end());
  std::vector<std::uint8_t> skip(ds.cols(), 0);
  for (std::size_t j = 0; j < ds.cols(); ++j) skip[j] = ds.is_protected_column(j) ? 1 : 0;
  minmax_columns(v, ds.cols(), skip);
  std::optional<std::vector<int>> labels;
  if (ds.has_labels()) labels.emplace(ds.labels().begin(), ds.labels().end());
  return Dataset(ds.feature_names(), std::move(v), std::move(labels), ds.groups());
}

struct TriSplit {
  Dataset train1;
  Dataset train2;  // labels stripped
  Dataset test;
  std::vector<std::size_t> train1_rows, train2_rows, test_rows;
  std::uint64_t seed = 0;
};

/// Shuffles rows with a seeded generator and cuts them 40:40:20. Train2
/// comes back unlabeled; its labels are what the black box is asked for.
inline TriSplit tri_split(const Dataset& ds, std::uint64_t seed) {
  if (ds.rows() < 5)
    throw ContractError("tri_split needs at least 5 rows, got " + std::to_string(ds.rows()));
  if (!ds.has_labels()) throw ContractError("tri_split needs a labeled dataset");
  std::vector<std::size_t> order(ds.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n = ds.rows();
  const auto n1 = static_cast<std::size_t>(std::llround(0.4 * static_cast<double>(n)));
  const auto n2 = static_cast<std::size_t>(std::llround(0.4 * static_cast<double>(n)));
  TriSplit s;
  s.seed = seed;
  s.train1_rows.assign(order.begin(), order.begin() + n1);
  s.train2_rows.assign(order.begin() + n1, order.begin() + n1 + n2);
  s.test_rows.assign(order.begin() + n1 + n2, order.end());
  s.train1 = ds.subset(s.train1_rows);
  s.train2 = ds.subset(s.train2_rows).without_labels();
  s.test = ds.subset(s.test_rows);
  return s;
}

struct SyntheticData {
  RawDataset raw;
  Schema schema;
  Dataset dataset;
};

/// Synthetic biased data.
///
/// Columns: `sex` (protected, privileged = "1", drawn 50/50), `legit`
/// (uniform, drives the honest label), and three nuisance columns: `x1` an
/// ordinal level in 0..4, `x2` a count in 0..9, `x3` a category code in 0..2.
/// The discrete columns mimic the coded fields of real tabular data. The
/// class column
/// `label` (favorable "1") is generated as:
///
///   unprivileged and u < bias_strength  -> 0
///   otherwise                           -> legit >= 0.5
///
/// and then flipped with probability `noise`. Cells are printed with six
/// decimals; the dataset is the encoding of exactly those cells.
inline SyntheticData synth_biased(std::size_t n, double bias_strength, double noise,
                                  std::uint64_t seed) {
  if (n < 50) throw ContractError("synth_biased needs n >= 50");
  if (bias_strength < 0 || bias_strength > 1 || noise < 0 || noise > 1)
    throw ContractError("bias_strength and noise must lie in [0,1]");
  SyntheticData out;
  auto& schema = out.schema;
  schema.features = {{"sex", FeatureKind::numeric},
                     {"legit", FeatureKind::numeric},
                     {"x1", FeatureKind::numeric},
                     {"x2", FeatureKind::numeric},
                     {"x3", FeatureKind::numeric}};
  schema.class_name = "label";
  schema.favorable = "1";
  schema.protected_attributes = {{"sex", {"1"}, std::nullopt}};

  auto& raw = out.raw;
  for (const auto& f : schema.features) raw.feature_names.push_back(f.name);
  Rng rng(seed);
  char buf[32];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const bool privileged = uniform01(rng) < 0.5;
    const double legit = uniform01(rng);
    const int x1 = static_cast<int>(uniform_index(rng, 5));
    const int x2 = static_cast<int>(uniform_index(rng, 10));
    const int x3 = static_cast<int>(uniform_index(rng, 3));
    const double u_bias = uniform01(rng), u_noise = uniform01(rng);
    // The printed value is what the label rule sees.
    const std::string legit_text = fmt(legit);
    int label = std::stod(legit_text) >= 0.5 ? 1 : 0;
    if (!privileged && u_bias < bias_strength) label = 0;
    if (u_noise < noise) label = 1 - label;
    raw.cells.push_back({privileged ? "1" : "0", legit_text, std::to_string(x1),
                         std::to_string(x2), std::to_string(x3)});
    raw.labels.push_back(label ? "1" : "0");
  }
  out.dataset = encode_normalize(raw, schema);
  return out;
}

inline void write_csv(std::ostream& out, const RawDataset& raw, const Schema& schema) {
  for (const auto& name : raw.feature_names) out << name << ',';
  out << schema.class_name << '\n';
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    for (const auto& cell : raw.cells[i]) out << cell << ',';
    out << raw.labels[i] << '\n';
  }
}

}  // namespace stealth
