#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "leafdistill/config.hpp"
#include "leafdistill/error.hpp"
#include "leafdistill/rng.hpp"

namespace leafdistill {

// A stage could not run: missing or stale upstream artifacts, a held lock.
class StageError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "stage_error"; }
};

enum class Stage { Ingest, Partition, Distill, Filter, Evaluate, CrossEval, Audit, Sensitivity, Report };

const std::vector<Stage>& all_stages();
std::string stage_name(Stage s);
std::optional<Stage> parse_stage(std::string_view name);

// Every stage seed is derive_seed(master_seed, label, parts). Labels in use:
//   "split"                          train/test shuffle
//   "partition"                      k-means++ seeding
//   "distill", {c}                   generator forest of cluster c
//   "synthesize", {c}                in-region draws of cluster c
//   "filter"                         evaluator shared by every grid cell and by the
//                                    combined_synthetic[_unfiltered] metrics
//   "evaluate/<variant>"             evaluator of every other metrics variant
//   "cross_eval"                     base seed for cross_cluster_eval
//   "audit/target", "audit/shadow"   MIA target forest and shadow attack
//   "sensitivity_eval"               evaluator shared by every tree count
// The sensitivity sweep reuses the "distill"/"synthesize" seeds so larger
// tree counts extend, rather than replace, the smaller forests.
inline std::uint64_t stage_seed(const ExperimentConfig& c, std::string_view label,
                                std::initializer_list<std::uint64_t> parts = {}) {
  return derive_seed(c.master_seed, label, parts);
}

// Artifact layout under output_dir:
//   ingest/{train.csv,test.csv,standardization.json,summary.json}
//   partition/{assignments.jsonl,test_assignments.jsonl,centroids.json}
//   distill/cluster_<c>/{forest.json,regions.jsonl,synthetic.csv,rules.csv}, distill/ratios.json
//   filter/{grid.json,grid.csv,score_histogram.csv,policy.json}, filter/cluster_<c>/synthetic.csv
//   evaluate/metrics.json
//   cross_eval/{cross_cluster.csv,cross_cluster.json}
//   audit/{audit.json,summary.txt,target_forest.json}
//   sensitivity/curve.csv
//   report/{report.json,summary.txt}
//   manifest.json (config, hash, version, artifact checksums per stage)
//   timings.json (wall-clock seconds per stage; the only non-deterministic file)
class Pipeline {
 public:
  // Creates output_dir and takes its lock file; throws StageError when the
  // lock is already held.
  explicit Pipeline(ExperimentConfig config);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  void run(Stage s);
  void run_all();

  const ExperimentConfig& config() const noexcept { return config_; }
  const std::filesystem::path& output_dir() const noexcept { return config_.output_dir; }
  std::optional<Stage> current_stage() const noexcept { return current_; }

  // Human-readable summaries written by the audit and report stages.
  std::string audit_summary() const;
  std::string report_summary() const;

 private:
  void record(Stage s, const std::vector<std::string>& artifacts, double seconds);

  ExperimentConfig config_;
  std::filesystem::path lock_path_;
  std::optional<Stage> current_;
};

}  // namespace leafdistill
