#include "leafdistill/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "leafdistill/error.hpp"
#include "leafdistill/parallel.hpp"
#include "leafdistill/rng.hpp"

namespace leafdistill {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) throw ArgumentError("matrix data size does not match shape");
}

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) throw ArgumentError("row length does not match matrix column count");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::size_t Dataset::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label{1}));
}

double Dataset::positive_rate() const {
  return labels.empty() ? 0.0 : static_cast<double>(positives()) / static_cast<double>(labels.size());
}

void Dataset::validate() const {
  if (features.rows() != labels.size()) throw ArgumentError("feature rows != label count");
  if (sample_ids.size() != labels.size()) throw ArgumentError("sample id count != label count");
  if (feature_names.size() != features.cols()) throw ArgumentError("feature name count != column count");
  for (Label l : labels)
    if (l > 1) throw ArgumentError("labels must be 0 or 1");
  for (double v : features.values())
    if (!std::isfinite(v)) throw ArgumentError("non-finite feature value");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.features = features.select_rows(indices);
  out.feature_names = feature_names;
  out.labels.reserve(indices.size());
  out.sample_ids.reserve(indices.size());
  for (std::size_t i : indices) {
    out.labels.push_back(labels[i]);
    out.sample_ids.push_back(sample_ids[i]);
  }
  return out;
}

Dataset concat(std::span<const Dataset> parts) {
  Dataset out;
  if (parts.empty()) return out;
  out.feature_names = parts.front().feature_names;
  std::vector<double> values;
  std::size_t rows = 0;
  for (const Dataset& p : parts) {
    if (p.feature_names != out.feature_names) throw ArgumentError("concat: feature names differ");
    values.insert(values.end(), p.features.values().begin(), p.features.values().end());
    rows += p.size();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    out.sample_ids.insert(out.sample_ids.end(), p.sample_ids.begin(), p.sample_ids.end());
  }
  out.features = Matrix(rows, out.feature_names.size(), std::move(values));
  return out;
}

// ---------------------------------------------------------------------------
// CSV

CsvTable parse_csv(std::string_view text) {
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF)
    text.remove_prefix(3);

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    // A line holding a single empty unquoted field is a blank line.
    if (!(record.size() == 1 && record[0].empty() && !field_started)) records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };
  while (i < text.size()) {
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
        field.push_back(c);
      }
      ++i;
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
    ++i;
  }
  if (in_quotes) throw ParseError("unterminated quoted field", records.size());
  if (field_started || !field.empty() || !record.empty()) end_record();

  CsvTable table;
  if (records.empty()) throw SchemaError("CSV has no header row");
  table.header = std::move(records.front());
  table.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open CSV file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str());
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  return std::string(s.substr(b, e - b));
}

bool is_missing(const std::string& cell) {
  if (cell.empty()) return true;
  std::string lower;
  for (char c : cell) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return lower == "na" || lower == "nan" || lower == "null" || lower == "n/a";
}

std::optional<double> parse_number(const std::string& cell) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (first != last && *first == '+') ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) return std::nullopt;
  return v;
}

}  // namespace

IngestResult ingest_table(const CsvTable& table, const IngestOptions& options) {
  std::unordered_map<std::string, std::size_t> column_of;
  for (std::size_t c = 0; c < table.header.size(); ++c) column_of.emplace(trim(table.header[c]), c);

  auto label_it = column_of.find(options.label_column);
  if (label_it == column_of.end()) throw SchemaError("label column '" + options.label_column + "' not found");
  const std::size_t label_col = label_it->second;

  std::optional<std::size_t> id_col;
  if (!options.id_column.empty()) {
    if (auto it = column_of.find(options.id_column); it != column_of.end()) id_col = it->second;
  }

  std::vector<std::string> names;
  std::vector<std::size_t> cols;
  if (options.feature_columns.empty()) {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      const std::string name = trim(table.header[c]);
      if (c == label_col || (id_col && c == *id_col) || name.rfind("__", 0) == 0) continue;
      names.push_back(name);
      cols.push_back(c);
    }
  } else {
    for (const std::string& name : options.feature_columns) {
      auto it = column_of.find(name);
      if (it == column_of.end()) throw SchemaError("feature column '" + name + "' not found");
      names.push_back(name);
      cols.push_back(it->second);
    }
  }
  if (names.empty()) throw SchemaError("no feature columns");

  IngestResult result;
  Dataset& ds = result.dataset;
  ds.feature_names = names;
  std::vector<double> values;
  values.reserve(table.rows.size() * cols.size());
  std::vector<double> row_values(cols.size());
  std::size_t kept = 0;

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t row_number = r + 1;
    if (row.size() != table.header.size())
      throw ParseError("expected " + std::to_string(table.header.size()) + " fields, got " +
                           std::to_string(row.size()),
                       row_number);
    const std::string label_cell = trim(row[label_col]);
    bool missing = is_missing(label_cell);
    std::vector<std::string> cells(cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
      cells[j] = trim(row[cols[j]]);
      if (is_missing(cells[j])) missing = true;
    }
    if (missing) {
      ++result.dropped_rows;
      continue;
    }
    for (std::size_t j = 0; j < cols.size(); ++j) {
      auto v = parse_number(cells[j]);
      if (!v) throw ParseError("non-numeric value '" + cells[j] + "' in column '" + names[j] + "'", row_number);
      if (!std::isfinite(*v)) throw ParseError("non-finite value in column '" + names[j] + "'", row_number);
      row_values[j] = *v;
    }
    auto label = parse_number(label_cell);
    if (!label || (*label != 0.0 && *label != 1.0))
      throw ParseError("label '" + label_cell + "' is not 0 or 1", row_number);

    values.insert(values.end(), row_values.begin(), row_values.end());
    ds.labels.push_back(static_cast<Label>(*label));
    ds.sample_ids.push_back(id_col ? trim(row[*id_col]) : std::to_string(row_number));
    ++kept;
  }
  ds.features = Matrix(kept, cols.size(), std::move(values));
  return result;
}

IngestResult ingest_csv(const std::string& path, const IngestOptions& options) {
  return ingest_table(read_csv(path), options);
}

void write_dataset_csv(const std::string& path, const Dataset& ds, const std::string& label_column) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path);
  out << "__id";
  for (const auto& n : ds.feature_names) out << ',' << csv_escape(n);
  out << ',' << csv_escape(label_column) << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << csv_escape(ds.sample_ids[i]);
    for (double v : ds.features.row(i)) out << ',' << format_double(v);
    out << ',' << static_cast<int>(ds.labels[i]) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Standardization

std::string StandardizationParams::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t j = 0; j < means.size(); ++j) {
    arr.push_back({{"feature", feature_names[j]},
                   {"mean", means[j]},
                   {"std", stddevs[j]},
                   {"constant", static_cast<bool>(constant[j])}});
  }
  return arr.dump(2);
}

StandardizationParams StandardizationParams::from_json(const std::string& text) {
  StandardizationParams p;
  for (const auto& item : nlohmann::json::parse(text)) {
    p.feature_names.push_back(item.at("feature").get<std::string>());
    p.means.push_back(item.at("mean").get<double>());
    p.stddevs.push_back(item.at("std").get<double>());
    p.constant.push_back(item.value("constant", false));
  }
  return p;
}

Standardized standardize(const Dataset& ds) {
  const std::size_t n = ds.size();
  const std::size_t d = ds.feature_count();
  if (n < 2) throw ArgumentError("standardize requires at least 2 samples");

  StandardizationParams p;
  p.feature_names = ds.feature_names;
  p.means.assign(d, 0.0);
  p.stddevs.assign(d, 0.0);
  p.constant.assign(d, false);
  for (std::size_t j = 0; j < d; ++j) {
    double lo = ds.features(0, j), hi = lo, sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = ds.features(i, j);
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0, comp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dv = ds.features(i, j) - mean;
      ss += dv * dv;
      comp += dv;
    }
    p.means[j] = mean;
    if (lo == hi) {
      p.constant[j] = true;
    } else {
      // Corrected two-pass variance.
      const double nn = static_cast<double>(n);
      p.stddevs[j] = std::sqrt((ss - comp * comp / nn) / nn);
    }
  }
  Standardized out{apply_standardization(ds, p), p};
  return out;
}

Dataset apply_standardization(const Dataset& ds, const StandardizationParams& params) {
  if (params.means.size() != ds.feature_count()) throw ArgumentError("standardization width mismatch");
  Dataset out = ds;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto row = out.features.row(i);
    for (std::size_t j = 0; j < row.size(); ++j)
      if (!params.constant[j]) row[j] = (row[j] - params.means[j]) / params.stddevs[j];
  }
  return out;
}

Dataset inverse_standardize(const Dataset& ds, const StandardizationParams& params) {
  if (params.means.size() != ds.feature_count()) throw ArgumentError("standardization width mismatch");
  Dataset out = ds;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto row = out.features.row(i);
    for (std::size_t j = 0; j < row.size(); ++j)
      if (!params.constant[j]) row[j] = row[j] * params.stddevs[j] + params.means[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Split

Split train_test_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ArgumentError("test_fraction must lie in (0, 1)");
  const std::size_t n = ds.size();
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  if (n_test < 1 || n_test >= n) throw ArgumentError("test_fraction leaves an empty side");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "train_test_split"));
  rng.shuffle(order.begin(), order.end());

  Split s;
  s.test_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(s.test_indices.begin(), s.test_indices.end());
  std::sort(s.train_indices.begin(), s.train_indices.end());
  s.train = ds.subset(s.train_indices);
  s.test = ds.subset(s.test_indices);
  return s;
}

// ---------------------------------------------------------------------------
// k-means

std::vector<std::size_t> ClusterAssignment::sizes() const {
  std::vector<std::size_t> s(k, 0);
  for (std::size_t c : cluster_of) ++s[c];
  return s;
}

std::vector<std::size_t> ClusterAssignment::members(std::size_t cluster) const {
  std::vector<std::size_t> m;
  for (std::size_t i = 0; i < cluster_of.size(); ++i)
    if (cluster_of[i] == cluster) m.push_back(i);
  return m;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

Matrix kmeans_plusplus_init(const Matrix& x, std::size_t k, std::uint64_t seed) {
  const std::size_t n = x.rows();
  if (k == 0 || k > n) throw ArgumentError("k must lie in [1, n_samples]");
  Rng rng(derive_seed(seed, "kmeans++"));
  Matrix centroids;
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::size_t chosen = static_cast<std::size_t>(rng.index(n));
  for (std::size_t c = 0; c < k; ++c) {
    centroids.append_row(x.row(chosen));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], squared_distance(x.row(i), x.row(chosen)));
      total += best[i];
    }
    if (c + 1 == k) break;
    if (total <= 0.0) {
      chosen = static_cast<std::size_t>(rng.index(n));
      continue;
    }
    double target = rng.uniform01() * total;
    chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= best[i];
      if (target < 0.0 && best[i] > 0.0) {
        chosen = i;
        break;
      }
    }
  }
  return centroids;
}

namespace {

// Nearest centroid per row; returns the objective.
double assign_nearest(const Matrix& x, const Matrix& centroids, std::vector<std::size_t>& cluster_of,
                      std::vector<double>& dist) {
  const std::size_t n = x.rows();
  parallel_for(n, [&](std::size_t i) {
    std::size_t arg = 0;
    double bestd = squared_distance(x.row(i), centroids.row(0));
    for (std::size_t c = 1; c < centroids.rows(); ++c) {
      const double dd = squared_distance(x.row(i), centroids.row(c));
      if (dd < bestd) {
        bestd = dd;
        arg = c;
      }
    }
    cluster_of[i] = arg;
    dist[i] = bestd;
  });
  double obj = 0.0;
  for (double v : dist) obj += v;
  return obj;
}

}  // namespace

ClusterAssignment kmeans_partition(const Matrix& x, const KMeansOptions& options) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  ClusterAssignment out;
  out.k = options.k;
  out.centroids = kmeans_plusplus_init(x, options.k, options.seed);
  out.cluster_of.assign(n, 0);
  std::vector<double> dist(n, 0.0);

  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    out.objective_history.push_back(assign_nearest(x, out.centroids, out.cluster_of, dist));
    out.iterations = iter + 1;

    Matrix next(options.k, d, 0.0);
    std::vector<std::size_t> counts(options.k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = next.row(out.cluster_of[i]);
      auto src = x.row(i);
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      ++counts[out.cluster_of[i]];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < options.k; ++c) {
      if (counts[c] > 0) {
        for (double& v : next.row(c)) v /= static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: reseed from the point farthest from its centroid.
      std::size_t far = 0;
      double fard = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && dist[i] > fard) {
          fard = dist[i];
          far = i;
        }
      }
      taken[far] = true;
      std::copy(x.row(far).begin(), x.row(far).end(), next.row(c).begin());
    }

    double shift = 0.0;
    for (std::size_t c = 0; c < options.k; ++c)
      shift = std::max(shift, std::sqrt(squared_distance(next.row(c), out.centroids.row(c))));
    out.centroids = std::move(next);
    if (shift < options.tol) break;
  }
  out.objective_history.push_back(assign_nearest(x, out.centroids, out.cluster_of, dist));
  return out;
}

}  // namespace leafdistill
