#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "bcr/core.hpp"

namespace bcr {

// ---------------------------------------------------------------------------
// Schema

enum class ColumnKind { numeric, categorical };
enum class Task { binary, multiclass, regression };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<std::string> categories;
};

struct Target {
  std::string name;
  Task task = Task::binary;
  std::vector<std::string> classes;  // empty for regression
};

inline bool is_classification(Task t) { return t != Task::regression; }

inline const char* task_name(Task t) {
  switch (t) {
    case Task::binary: return "binary";
    case Task::multiclass: return "multiclass";
    case Task::regression: return "regression";
  }
  return "?";
}

struct Schema {
  std::vector<Column> columns;
  Target target;

  std::size_t n_classes() const { return target.classes.size(); }
  Task task() const { return target.task; }

  void validate() const {
    std::set<std::string> names;
    for (const auto& c : columns) {
      if (c.name.empty()) throw ConfigError("schema: column with empty name");
      if (!names.insert(c.name).second) throw ConfigError("schema: duplicate column name '" + c.name + "'");
      if (c.kind == ColumnKind::categorical) {
        if (c.categories.size() < 2)
          throw ConfigError("schema: categorical column '" + c.name + "' lists fewer than 2 categories");
        if (std::set<std::string>(c.categories.begin(), c.categories.end()).size() != c.categories.size())
          throw ConfigError("schema: duplicate category in column '" + c.name + "'");
      }
    }
    if (target.name.empty()) throw ConfigError("schema: target has no name");
    if (!names.insert(target.name).second) throw ConfigError("schema: target name collides with a column");
    switch (target.task) {
      case Task::binary:
        if (target.classes.size() != 2) throw ConfigError("schema: binary target needs exactly 2 classes");
        break;
      case Task::multiclass:
        if (target.classes.size() < 3) throw ConfigError("schema: multiclass target needs at least 3 classes");
        break;
      case Task::regression:
        if (!target.classes.empty()) throw ConfigError("schema: regression target must not list classes");
        break;
    }
  }
};

// ---------------------------------------------------------------------------
// Table. Each row holds one cell per feature column followed by the target.

struct Missing {
  friend bool operator==(Missing, Missing) { return true; }
};

using Cell = std::variant<Missing, double, std::size_t>;

inline bool is_missing(const Cell& c) { return std::holds_alternative<Missing>(c); }

struct Table {
  Schema schema;
  std::vector<std::vector<Cell>> rows;

  std::size_t size() const { return rows.size(); }
  std::size_t width() const { return schema.columns.size() + 1; }
  std::size_t target_index() const { return schema.columns.size(); }

  Table subset(std::span<const std::size_t> idx) const {
    Table t{schema, {}};
    t.rows.reserve(idx.size());
    for (auto i : idx) t.rows.push_back(rows[i]);
    return t;
  }

  std::vector<int> class_labels() const {
    std::vector<int> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(static_cast<int>(std::get<std::size_t>(r[target_index()])));
    return out;
  }
};

// ---------------------------------------------------------------------------
// CSV

namespace detail {

// RFC-4180 record reader: quoted fields, doubled quotes, CRLF or LF endings.
inline bool read_csv_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char ch;
  while (in.get(ch)) {
    any = true;
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      in_quotes = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\r') {
      if (in.peek() == '\n') in.get(ch);
      break;
    } else if (ch == '\n') {
      break;
    } else {
      field.push_back(ch);
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline bool is_missing_token(const std::string& s) { return s.empty() || s == "NA"; }

inline Table parse_csv(std::istream& in, const Schema& schema) {
  schema.validate();
  std::vector<std::string> fields;
  if (!detail::read_csv_record(in, fields)) throw IoError("csv: missing header row");

  // header position -> schema slot (columns..., target)
  const std::size_t width = schema.columns.size() + 1;
  if (fields.size() != width)
    throw ConfigError("csv: header has " + std::to_string(fields.size()) + " fields, schema expects " +
                      std::to_string(width));
  std::vector<std::size_t> slot_of(width);
  std::vector<bool> seen(width, false);
  for (std::size_t h = 0; h < fields.size(); ++h) {
    std::size_t slot = width;
    if (fields[h] == schema.target.name) slot = width - 1;
    for (std::size_t j = 0; j < schema.columns.size(); ++j)
      if (schema.columns[j].name == fields[h]) slot = j;
    if (slot == width) throw ConfigError("csv: header field '" + fields[h] + "' is not in the schema");
    if (seen[slot]) throw ConfigError("csv: duplicate header field '" + fields[h] + "'");
    seen[slot] = true;
    slot_of[h] = slot;
  }

  Table table{schema, {}};
  std::size_t line = 1;
  while (detail::read_csv_record(in, fields)) {
    ++line;
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    if (fields.size() != width)
      throw IoError("csv: row " + std::to_string(line) + " has " + std::to_string(fields.size()) + " fields");
    std::vector<Cell> row(width);
    for (std::size_t h = 0; h < width; ++h) {
      const std::size_t slot = slot_of[h];
      const std::string& tok = fields[h];
      if (is_missing_token(tok)) {
        row[slot] = Missing{};
        continue;
      }
      const bool is_target = slot == width - 1;
      const std::string& name = is_target ? schema.target.name : schema.columns[slot].name;
      const std::vector<std::string>* cats = nullptr;
      if (is_target) {
        if (is_classification(schema.target.task)) cats = &schema.target.classes;
      } else if (schema.columns[slot].kind == ColumnKind::categorical) {
        cats = &schema.columns[slot].categories;
      }
      if (cats) {
        auto it = std::find(cats->begin(), cats->end(), tok);
        if (it == cats->end())
          throw IoError("csv: row " + std::to_string(line) + ", column '" + name + "': unknown category '" + tok +
                        "'");
        row[slot] = static_cast<std::size_t>(it - cats->begin());
      } else {
        double v = 0.0;
        const char* first = tok.data();
        const char* last = tok.data() + tok.size();
        while (first < last && *first == ' ') ++first;
        while (last > first && last[-1] == ' ') --last;
        auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v))
          throw IoError("csv: row " + std::to_string(line) + ", column '" + name + "': cannot parse '" + tok +
                        "' as a number");
        row[slot] = v;
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline Table load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("csv: cannot open '" + path + "'");
  return parse_csv(in, schema);
}

inline void write_csv(std::ostream& out, const Table& t) {
  const auto& s = t.schema;
  for (const auto& c : s.columns) out << detail::csv_escape(c.name) << ',';
  out << detail::csv_escape(s.target.name) << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      const Cell& c = row[j];
      const bool is_target = j == s.columns.size();
      if (is_missing(c)) {
        out << "NA";
      } else if (auto* v = std::get_if<double>(&c)) {
        out << detail::format_double(*v);
      } else {
        const auto k = std::get<std::size_t>(c);
        out << detail::csv_escape(is_target ? s.target.classes[k] : s.columns[j].categories[k]);
      }
      out << (j + 1 == row.size() ? '\n' : ',');
    }
  }
}

inline void save_csv(const std::string& path, const Table& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("csv: cannot write '" + path + "'");
  write_csv(out, t);
}

// ---------------------------------------------------------------------------
// Imputation: median for numeric columns, mode for categorical ones, with
// statistics taken from `reference` only. Mode ties go to the category seen
// first in row order.

inline std::vector<Cell> imputation_values(const Table& reference) {
  const std::size_t width = reference.width();
  std::vector<Cell> fill(width);
  for (std::size_t j = 0; j < width; ++j) {
    std::vector<double> nums;
    std::vector<std::size_t> counts;
    std::vector<std::size_t> first_seen;
    for (std::size_t i = 0; i < reference.rows.size(); ++i) {
      const Cell& c = reference.rows[i][j];
      if (auto* v = std::get_if<double>(&c)) {
        nums.push_back(*v);
      } else if (auto* k = std::get_if<std::size_t>(&c)) {
        if (*k >= counts.size()) {
          counts.resize(*k + 1, 0);
          first_seen.resize(*k + 1, SIZE_MAX);
        }
        if (counts[*k]++ == 0) first_seen[*k] = i;
      }
    }
    const std::string name = j < reference.schema.columns.size() ? reference.schema.columns[j].name
                                                                   : reference.schema.target.name;
    if (!nums.empty()) {
      std::sort(nums.begin(), nums.end());
      const std::size_t m = nums.size();
      fill[j] = m % 2 == 1 ? nums[m / 2] : 0.5 * (nums[m / 2 - 1] + nums[m / 2]);
    } else if (!counts.empty()) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < counts.size(); ++k)
        if (counts[k] > counts[best] || (counts[k] == counts[best] && counts[k] > 0 && first_seen[k] < first_seen[best]))
          best = k;
      fill[j] = best;
    } else {
      throw Error("impute: column '" + name + "' is entirely missing in the reference split");
    }
  }
  return fill;
}

inline Table impute(const Table& table, const Table& reference) {
  const auto fill = imputation_values(reference);
  Table out = table;
  for (auto& row : out.rows)
    for (std::size_t j = 0; j < row.size(); ++j)
      if (is_missing(row[j])) row[j] = fill[j];
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitRatios {
  double train = 0.90;
  double validation = 0.05;
  double test = 0.05;
};

struct SplitSet {
  Table train;
  Table validation;
  Table test;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;
  std::vector<std::size_t> test_rows;
};

namespace detail {

// Distribute `total` across groups proportional to `weights` (largest
// remainder; ties to the lower group index).
inline std::vector<std::size_t> largest_remainder(std::span<const double> weights, std::size_t total) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> out(weights.size(), 0);
  if (weights.empty() || wsum <= 0.0) return out;
  std::vector<double> rem(weights.size());
  std::size_t assigned = 0;
  for (std::size_t g = 0; g < weights.size(); ++g) {
    const double exact = static_cast<double>(total) * weights[g] / wsum;
    out[g] = static_cast<std::size_t>(std::floor(exact));
    rem[g] = exact - static_cast<double>(out[g]);
    assigned += out[g];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < total; k = (k + 1) % order.size(), ++assigned) ++out[order[k]];
  return out;
}

}  // namespace detail

// Validation and test sizes are floor(n * ratio); the remainder goes to
// train. Classification splits are stratified: per-class quotas are
// allocated by largest remainder so the global sizes stay exact.
inline SplitSet split(const Table& table, SplitRatios ratios, std::uint64_t seed) {
  const std::size_t n = table.size();
  if (n < 20) throw Error("split: need at least 20 rows, got " + std::to_string(n));
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split: ratios must be non-negative and sum to 1");

  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.validation + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.test + 1e-9));

  std::vector<std::vector<std::size_t>> groups;
  if (is_classification(table.schema.task())) {
    groups.resize(table.schema.n_classes());
    for (std::size_t i = 0; i < n; ++i)
      groups[std::get<std::size_t>(table.rows[i][table.target_index()])].push_back(i);
    std::erase_if(groups, [](const auto& g) { return g.empty(); });
    const bool tiny = std::any_of(groups.begin(), groups.end(), [](const auto& g) { return g.size() < 3; });
    if (tiny) {
      warn("split: a class has fewer than 3 members; falling back to an unstratified split");
      groups.clear();
    }
  }
  if (groups.empty()) {
    groups.emplace_back(n);
    std::iota(groups[0].begin(), groups[0].end(), 0);
  }

  std::vector<double> sizes;
  for (const auto& g : groups) sizes.push_back(static_cast<double>(g.size()));
  const auto val_quota = detail::largest_remainder(sizes, n_val);
  std::vector<double> left(sizes.size());
  for (std::size_t g = 0; g < groups.size(); ++g) left[g] = sizes[g] - static_cast<double>(val_quota[g]);
  auto test_quota = detail::largest_remainder(sizes, n_test);
  // test quota never exceeds what validation left in the group
  for (std::size_t g = 0; g < groups.size(); ++g)
    test_quota[g] = std::min<std::size_t>(test_quota[g], static_cast<std::size_t>(left[g]));

  SplitSet out;
  out.seed = seed;
  Rng rng(derive_seed(seed, 0x5b11));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto members = groups[g];
    shuffle(members, rng);
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (k < val_quota[g]) out.validation_rows.push_back(members[k]);
      else if (k < val_quota[g] + test_quota[g]) out.test_rows.push_back(members[k]);
      else out.train_rows.push_back(members[k]);
    }
  }
  std::sort(out.train_rows.begin(), out.train_rows.end());
  std::sort(out.validation_rows.begin(), out.validation_rows.end());
  std::sort(out.test_rows.begin(), out.test_rows.end());
  out.train = table.subset(out.train_rows);
  out.validation = table.subset(out.validation_rows);
  out.test = table.subset(out.test_rows);
  return out;
}

// ---------------------------------------------------------------------------
// Encoding

struct FeatureBlock {
  std::size_t column = 0;
  std::size_t offset = 0;
  std::size_t width = 1;
  bool categorical = false;
  double mean = 0.0;
  double sd = 1.0;
};

// Positions of numeric slots and one-hot groups inside an encoded row.
struct Layout {
  std::size_t width = 0;
  std::vector<std::size_t> numeric;
  std::vector<std::pair<std::size_t, std::size_t>> groups;  // (offset, width)
};

struct Targets {
  Task task = Task::binary;
  std::size_t n_classes = 0;
  std::vector<double> values;  // regression, min-max scaled on train
  std::vector<int> labels;     // hard class indices
  Matrix soft;                 // n x C distributions; overrides labels when present

  std::size_t size() const { return task == Task::regression ? values.size() : labels.size(); }
  bool has_soft() const { return soft.rows() > 0; }

  int hard_label(std::size_t i) const {
    if (!has_soft()) return labels[i];
    auto r = soft.row(i);
    return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }

  Targets select(std::span<const std::size_t> idx) const {
    Targets t;
    t.task = task;
    t.n_classes = n_classes;
    for (auto i : idx) {
      if (task == Task::regression) t.values.push_back(values[i]);
      else t.labels.push_back(labels[i]);
    }
    if (has_soft()) t.soft = soft.select_rows(idx);
    return t;
  }

  void append(const Targets& other) {
    if (size() > 0 && other.has_soft() != has_soft()) throw Error("targets: cannot mix soft and hard labels");
    values.insert(values.end(), other.values.begin(), other.values.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    for (std::size_t i = 0; i < other.soft.rows(); ++i) soft.append_row(other.soft.row(i));
  }
};

struct EncodedMatrix {
  Matrix values;
  Targets target;

  std::size_t size() const { return values.rows(); }

  EncodedMatrix select(std::span<const std::size_t> idx) const {
    return {values.select_rows(idx), target.select(idx)};
  }
};

class Encoder {
 public:
  Encoder() = default;

  static Encoder fit(const Table& train) {
    if (train.size() == 0) throw Error("encoder: cannot fit on an empty table");
    Encoder e;
    e.schema_ = train.schema;
    std::size_t offset = 0;
    for (std::size_t j = 0; j < train.schema.columns.size(); ++j) {
      const auto& col = train.schema.columns[j];
      FeatureBlock b;
      b.column = j;
      b.offset = offset;
      if (col.kind == ColumnKind::categorical) {
        b.categorical = true;
        b.width = col.categories.size();
      } else {
        double sum = 0.0;
        std::size_t cnt = 0;
        for (const auto& r : train.rows)
          if (auto* v = std::get_if<double>(&r[j])) sum += *v, ++cnt;
        if (cnt == 0) throw Error("encoder: numeric column '" + col.name + "' has no values");
        b.mean = sum / static_cast<double>(cnt);
        double ss = 0.0;
        for (const auto& r : train.rows)
          if (auto* v = std::get_if<double>(&r[j])) ss += (*v - b.mean) * (*v - b.mean);
        b.sd = std::sqrt(ss / static_cast<double>(cnt));
        if (!(b.sd > 0.0)) b.sd = 1.0;
      }
      offset += b.width;
      e.blocks_.push_back(b);
    }
    e.width_ = offset;
    if (train.schema.task() == Task::regression) {
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& r : train.rows)
        if (auto* v = std::get_if<double>(&r[train.target_index()])) lo = std::min(lo, *v), hi = std::max(hi, *v);
      if (!std::isfinite(lo)) throw Error("encoder: regression target has no values");
      e.target_min_ = lo;
      e.target_range_ = hi > lo ? hi - lo : 1.0;
    }
    e.fitted_ = true;
    return e;
  }

  bool fitted() const { return fitted_; }
  std::size_t width() const { return width_; }
  const Schema& schema() const { return schema_; }
  const std::vector<FeatureBlock>& blocks() const { return blocks_; }
  double target_min() const { return target_min_; }
  double target_range() const { return target_range_; }

  Layout layout() const {
    Layout l;
    l.width = width_;
    for (const auto& b : blocks_) {
      if (b.categorical) l.groups.emplace_back(b.offset, b.width);
      else l.numeric.push_back(b.offset);
    }
    return l;
  }

  EncodedMatrix encode(const Table& t) const {
    if (!fitted_) throw Error("encoder: encode called before fit");
    if (t.schema.columns.size() != schema_.columns.size()) throw DimensionError("encoder: schema width mismatch");
    EncodedMatrix m{Matrix(t.size(), width_), {}};
    m.target.task = schema_.task();
    m.target.n_classes = schema_.n_classes();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto& row = t.rows[i];
      auto out = m.values.row(i);
      for (const auto& b : blocks_) {
        const Cell& c = row[b.column];
        if (is_missing(c)) throw Error("encoder: missing value in row " + std::to_string(i) + "; impute first");
        if (b.categorical) out[b.offset + std::get<std::size_t>(c)] = 1.0;
        else out[b.offset] = (std::get<double>(c) - b.mean) / b.sd;
      }
      const Cell& y = row[t.target_index()];
      if (is_missing(y)) throw Error("encoder: missing target in row " + std::to_string(i));
      if (schema_.task() == Task::regression) m.target.values.push_back((std::get<double>(y) - target_min_) / target_range_);
      else m.target.labels.push_back(static_cast<int>(std::get<std::size_t>(y)));
    }
    return m;
  }

  // Inverse map; one-hot blocks of synthetic rows are decoded by argmax.
  Table decode(const EncodedMatrix& m) const {
    if (!fitted_) throw Error("encoder: decode called before fit");
    if (m.values.cols() != width_)
      throw DimensionError("encoder: decode expects width " + std::to_string(width_) + ", got " +
                           std::to_string(m.values.cols()));
    Table t{schema_, {}};
    for (std::size_t i = 0; i < m.values.rows(); ++i) {
      auto in = m.values.row(i);
      std::vector<Cell> row(schema_.columns.size() + 1);
      for (const auto& b : blocks_) {
        if (b.categorical) {
          auto blk = in.subspan(b.offset, b.width);
          row[b.column] = static_cast<std::size_t>(std::max_element(blk.begin(), blk.end()) - blk.begin());
        } else {
          row[b.column] = in[b.offset] * b.sd + b.mean;
        }
      }
      if (schema_.task() == Task::regression) row.back() = m.target.values[i] * target_range_ + target_min_;
      else row.back() = static_cast<std::size_t>(m.target.hard_label(i));
      t.rows.push_back(std::move(row));
    }
    return t;
  }

 private:
  Schema schema_;
  std::vector<FeatureBlock> blocks_;
  std::size_t width_ = 0;
  double target_min_ = 0.0;
  double target_range_ = 1.0;
  bool fitted_ = false;
};

// Class frequencies of a hard-labelled target vector.
inline std::vector<double> class_frequencies(const Targets& t) {
  std::vector<double> f(t.n_classes, 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) f[static_cast<std::size_t>(t.hard_label(i))] += 1.0;
  for (auto& v : f) v /= static_cast<double>(std::max<std::size_t>(1, t.size()));
  return f;
}

}  // namespace bcr
