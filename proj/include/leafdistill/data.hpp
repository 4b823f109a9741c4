#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace leafdistill {

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void append_row(std::span<const double> values);
  Matrix select_rows(std::span<const std::size_t> indices) const;

  const std::vector<double>& values() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using Label = std::uint8_t;

// Numeric feature matrix with binary labels (1 = fraud).
struct Dataset {
  Matrix features;
  std::vector<Label> labels;
  std::vector<std::string> feature_names;
  std::vector<std::string> sample_ids;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t feature_count() const noexcept { return features.cols(); }
  std::size_t positives() const;
  double positive_rate() const;

  // Throws ArgumentError on any shape mismatch, non-binary label or non-finite value.
  void validate() const;

  Dataset subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Row-wise concatenation; feature names must match.
Dataset concat(std::span<const Dataset> parts);

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// RFC-4180 reader: quoted fields, doubled quotes, CRLF or LF line endings.
// A UTF-8 byte-order mark on the first line is skipped.
CsvTable read_csv(const std::string& path);
CsvTable parse_csv(std::string_view text);

std::string csv_escape(std::string_view field);

// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

struct IngestOptions {
  std::string label_column;
  // Expected feature columns in order. Empty: every column that is not the
  // label, the id column, or prefixed with "__".
  std::vector<std::string> feature_columns;
  // Column holding sample ids. Empty (or absent from the header): ids are
  // the 1-based data row number in the file.
  std::string id_column = "__id";
};

struct IngestResult {
  Dataset dataset;
  std::size_t dropped_rows = 0;
};

// Rows with a missing value (empty, NA, NaN, null) in any used column are
// dropped and counted. A non-numeric or infinite feature cell is a
// ParseError; a label outside {0,1} is a ParseError; missing columns are a
// SchemaError.
IngestResult ingest_csv(const std::string& path, const IngestOptions& options);
IngestResult ingest_table(const CsvTable& table, const IngestOptions& options);

// Writes `__id,<features...>,<label_column>` with round-trip doubles.
void write_dataset_csv(const std::string& path, const Dataset& ds, const std::string& label_column);

// ---------------------------------------------------------------------------
// Standardization

struct StandardizationParams {
  std::vector<std::string> feature_names;
  std::vector<double> means;
  std::vector<double> stddevs;  // population stddev; 0 for constant columns
  std::vector<bool> constant;

  std::string to_json() const;
  static StandardizationParams from_json(const std::string& text);
};

struct Standardized {
  Dataset dataset;
  StandardizationParams params;
};

// Population stddev (divide by n). Constant columns pass through unchanged
// and are flagged. Requires n >= 2.
Standardized standardize(const Dataset& ds);
Dataset apply_standardization(const Dataset& ds, const StandardizationParams& params);
Dataset inverse_standardize(const Dataset& ds, const StandardizationParams& params);

// ---------------------------------------------------------------------------
// Train/test split

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

// Test side gets round(n * test_fraction) rows chosen by a seeded shuffle;
// both sides keep the input row order.
Split train_test_split(const Dataset& ds, double test_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// k-means

struct KMeansOptions {
  std::size_t k = 3;
  std::uint64_t seed = 0;
  std::size_t max_iters = 300;
  double tol = 1e-6;  // on max centroid displacement
};

struct ClusterAssignment {
  std::vector<std::size_t> cluster_of;
  Matrix centroids;
  std::size_t k = 0;
  std::size_t iterations = 0;
  // Sum of squared distances after each assignment step.
  std::vector<double> objective_history;

  std::vector<std::size_t> sizes() const;
  std::vector<std::size_t> members(std::size_t cluster) const;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

// k-means++ seeding: first centroid uniform, then D^2-weighted draws.
Matrix kmeans_plusplus_init(const Matrix& x, std::size_t k, std::uint64_t seed);

// Lloyd iterations from k-means++ seeds. An empty cluster's centroid moves to
// the point farthest from its assigned centroid. The returned assignment is
// a final nearest-centroid pass against the returned centroids (ties go to
// the lower index).
ClusterAssignment kmeans_partition(const Matrix& x, const KMeansOptions& options);

}  // namespace leafdistill
