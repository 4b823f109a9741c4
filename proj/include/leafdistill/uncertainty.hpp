#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "leafdistill/data.hpp"
#include "leafdistill/distill.hpp"
#include "leafdistill/forest.hpp"

namespace leafdistill {

// One minus the largest hard-vote share. Binary range [0, 0.5]; 0 iff unanimous.
double disagreement(const Forest& forest, std::span<const double> x);
std::vector<double> disagreement(const Forest& forest, const Matrix& xs);

// Sets `disagreement` on every sample using the given forest.
void score_samples(const Forest& forest, std::vector<SyntheticSample>& samples);

// Nearest-rank percentile: the ceil(p/100 * n)-th order statistic (1-based),
// with p = 0 giving the minimum. Requires non-empty input.
double nearest_rank_percentile(std::vector<double> values, double percentile);

struct FilterPolicy {
  double pos_percentile = 100.0;
  double neg_percentile = 100.0;
  friend bool operator==(const FilterPolicy&, const FilterPolicy&) = default;
};

// Per-class score cutoffs; a class with no samples has no cutoff and passes
// through unfiltered.
struct FilterThresholds {
  std::optional<double> positive;
  std::optional<double> negative;
};

FilterThresholds resolve_thresholds(const std::vector<SyntheticSample>& samples, const FilterPolicy& policy);

struct FilterReport {
  std::size_t kept_positive = 0;
  std::size_t dropped_positive = 0;
  std::size_t kept_negative = 0;
  std::size_t dropped_negative = 0;
  FilterThresholds thresholds;
  std::vector<std::string> warnings;
};

// Keeps samples whose score is <= their class cutoff; input order is preserved.
std::vector<SyntheticSample> apply_thresholds(const std::vector<SyntheticSample>& samples,
                                              const FilterThresholds& thresholds, FilterReport* report = nullptr);

// resolve_thresholds + apply_thresholds. Every sample must carry a score.
std::vector<SyntheticSample> filter_samples(const std::vector<SyntheticSample>& samples, const FilterPolicy& policy,
                                            FilterReport* report = nullptr);

// Downstream AUC of a classifier trained on the filtered set.
using FilterEvaluator = std::function<double(const std::vector<SyntheticSample>&)>;

struct GridCell {
  double pos_percentile = 0.0;
  double neg_percentile = 0.0;
  std::optional<double> auc;  // empty when the evaluator failed
  std::size_t kept = 0;
  std::string error;
};

struct GridResult {
  std::vector<double> candidates;
  std::vector<GridCell> cells;  // row-major: pos index major, neg index minor
  FilterPolicy best;
  double best_auc = 0.0;

  const GridCell& cell(std::size_t pos_index, std::size_t neg_index) const {
    return cells[pos_index * candidates.size() + neg_index];
  }
};

// Evaluates every (pos, neg) pair of candidates. The argmax breaks AUC ties
// toward larger retention: larger pos + neg, then larger pos. Cells whose
// evaluator throws are recorded as missing. Cells run in parallel.
GridResult grid_search(const std::vector<SyntheticSample>& samples, const std::vector<double>& candidates,
                       const FilterEvaluator& evaluate);

// 5, 10, ..., 100.
std::vector<double> default_percentile_grid();

}  // namespace leafdistill
