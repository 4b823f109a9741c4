#include "leafdistill/uncertainty.hpp"

#include <algorithm>
#include <cmath>

#include "leafdistill/error.hpp"
#include "leafdistill/parallel.hpp"

namespace leafdistill {

double disagreement(const Forest& forest, std::span<const double> x) {
  const auto p = forest.vote_proportions(x);
  return 1.0 - std::max(p[0], p[1]);
}

std::vector<double> disagreement(const Forest& forest, const Matrix& xs) {
  if (xs.cols() != forest.feature_count()) throw ArgumentError("dimension mismatch between samples and forest");
  std::vector<double> out(xs.rows());
  parallel_for(xs.rows(), [&](std::size_t i) { out[i] = disagreement(forest, xs.row(i)); });
  return out;
}

void score_samples(const Forest& forest, std::vector<SyntheticSample>& samples) {
  for (const auto& s : samples)
    if (s.x.size() != forest.feature_count()) throw ArgumentError("dimension mismatch between samples and forest");
  parallel_for(samples.size(), [&](std::size_t i) { samples[i].disagreement = disagreement(forest, samples[i].x); });
}

double nearest_rank_percentile(std::vector<double> values, double percentile) {
  if (values.empty()) throw ArgumentError("percentile of an empty set");
  if (!(percentile >= 0.0 && percentile <= 100.0)) throw ArgumentError("percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

namespace {

double score_of(const SyntheticSample& s) {
  if (!s.disagreement) throw ArgumentError("sample lacks a disagreement score");
  return *s.disagreement;
}

}  // namespace

FilterThresholds resolve_thresholds(const std::vector<SyntheticSample>& samples, const FilterPolicy& policy) {
  std::vector<double> pos, neg;
  for (const auto& s : samples) (s.label ? pos : neg).push_back(score_of(s));
  FilterThresholds t;
  if (!pos.empty()) t.positive = nearest_rank_percentile(std::move(pos), policy.pos_percentile);
  if (!neg.empty()) t.negative = nearest_rank_percentile(std::move(neg), policy.neg_percentile);
  return t;
}

std::vector<SyntheticSample> apply_thresholds(const std::vector<SyntheticSample>& samples,
                                              const FilterThresholds& thresholds, FilterReport* report) {
  FilterReport local;
  local.thresholds = thresholds;
  std::vector<SyntheticSample> kept;
  for (const auto& s : samples) {
    const double score = score_of(s);
    const auto& cutoff = s.label ? thresholds.positive : thresholds.negative;
    const bool keep = !cutoff || score <= *cutoff;
    if (s.label)
      ++(keep ? local.kept_positive : local.dropped_positive);
    else
      ++(keep ? local.kept_negative : local.dropped_negative);
    if (keep) kept.push_back(s);
  }
  if (report) {
    const bool any_pos = local.kept_positive + local.dropped_positive > 0;
    const bool any_neg = local.kept_negative + local.dropped_negative > 0;
    if (!any_pos) local.warnings.push_back("no positive samples; positive class passed through unfiltered");
    if (!any_neg) local.warnings.push_back("no negative samples; negative class passed through unfiltered");
    *report = std::move(local);
  }
  return kept;
}

std::vector<SyntheticSample> filter_samples(const std::vector<SyntheticSample>& samples, const FilterPolicy& policy,
                                            FilterReport* report) {
  return apply_thresholds(samples, resolve_thresholds(samples, policy), report);
}

GridResult grid_search(const std::vector<SyntheticSample>& samples, const std::vector<double>& candidates,
                       const FilterEvaluator& evaluate) {
  if (candidates.empty()) throw ArgumentError("grid search needs at least one candidate percentile");
  GridResult result;
  result.candidates = candidates;
  const std::size_t m = candidates.size();
  result.cells.resize(m * m);
  parallel_for(m * m, [&](std::size_t idx) {
    GridCell& cell = result.cells[idx];
    cell.pos_percentile = candidates[idx / m];
    cell.neg_percentile = candidates[idx % m];
    try {
      const auto kept = filter_samples(samples, {cell.pos_percentile, cell.neg_percentile});
      cell.kept = kept.size();
      cell.auc = evaluate(kept);
    } catch (const std::exception& e) {
      cell.auc.reset();
      cell.error = e.what();
    }
  });

  const GridCell* best = nullptr;
  for (const GridCell& c : result.cells) {
    if (!c.auc) continue;
    if (!best) {
      best = &c;
      continue;
    }
    const double retention = c.pos_percentile + c.neg_percentile;
    const double best_retention = best->pos_percentile + best->neg_percentile;
    if (*c.auc > *best->auc || (*c.auc == *best->auc && (retention > best_retention ||
                                                          (retention == best_retention &&
                                                           c.pos_percentile > best->pos_percentile))))
      best = &c;
  }
  if (!best) throw InternalError("grid search: every cell failed to evaluate");
  result.best = {best->pos_percentile, best->neg_percentile};
  result.best_auc = *best->auc;
  return result;
}

std::vector<double> default_percentile_grid() {
  std::vector<double> g;
  for (int p = 5; p <= 100; p += 5) g.push_back(p);
  return g;
}

}  // namespace leafdistill
