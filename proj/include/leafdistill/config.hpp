#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "leafdistill/forest.hpp"
#include "leafdistill/uncertainty.hpp"

namespace leafdistill {

inline constexpr const char* kToolVersion = "0.1.0";

struct FilterConfig {
  enum class Mode { Grid, Fixed };
  Mode mode = Mode::Grid;
  std::vector<double> candidates = default_percentile_grid();  // grid mode
  FilterPolicy policy;                                         // fixed mode
};

struct AuditConfig {
  double mia_holdout_auc_max = 0.55;
  // Optional cap on the fraction of degenerate synthetic rows.
  std::optional<double> max_degenerate_fraction;
  ForestParams shadow = ForestParams::evaluator_defaults();
};

struct ExperimentConfig {
  std::filesystem::path input_csv;
  std::string label_column = "isFraud";
  std::string id_column;  // empty: 1-based row numbers
  std::vector<std::string> features;
  double test_fraction = 0.2;
  std::size_t k_clusters = 3;
  std::uint64_t master_seed = 0;
  std::size_t kmeans_max_iters = 300;
  double kmeans_tol = 1e-6;
  ForestParams generator = ForestParams::generator_defaults();
  ForestParams evaluator = ForestParams::evaluator_defaults();
  std::string classifier = "forest";
  double logistic_l2 = 1e-4;
  std::size_t passes = 1;
  bool drop_degenerate = false;
  bool exclude_test_cluster_synthetic = false;
  FilterConfig filter;
  std::vector<std::size_t> sensitivity_tree_counts{2, 5, 10, 20};
  AuditConfig audit;
  std::filesystem::path output_dir;

  // Canonical form with every default spelled out. The input path is part of
  // it; output_dir is not, so one experiment hashes the same wherever it is
  // written.
  std::string to_json() const;
  // FNV-1a 64 of to_json(), as 16 hex digits.
  std::string hash() const;
};

// Parses and validates a config document. Relative paths resolve against
// `base_dir`. Every problem is reported as ConfigError "<json path>: <reason>".
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace leafdistill
