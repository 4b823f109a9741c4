#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "leafdistill/data.hpp"
#include "leafdistill/distill.hpp"
#include "leafdistill/forest.hpp"

namespace leafdistill {

struct Confusion {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
};

Confusion confusion(std::span<const Label> preds, std::span<const Label> labels);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  // No positive predictions: precision is reported as 0 and flagged.
  bool precision_undefined = false;
  // No positive labels: recall is reported as 0 and flagged.
  bool recall_undefined = false;
};

PrecisionRecall precision_recall(std::span<const Label> preds, std::span<const Label> labels);

// F1 micro-averaged over both classes. For binary single-label data this is
// identical to accuracy.
double micro_f1(std::span<const Label> preds, std::span<const Label> labels);
double accuracy(std::span<const Label> preds, std::span<const Label> labels);

// Mann-Whitney AUC with average ranks for ties. Throws UndefinedMetricError
// unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const Label> labels);

struct MetricsBundle {
  double precision = 0.0;
  double recall = 0.0;
  double micro_f1 = 0.0;
  double auc = 0.0;
  bool precision_undefined = false;
  bool auc_undefined = false;
  std::size_t n_test = 0;
  std::size_t n_pos = 0;
  double threshold = 0.5;
};

// Hard prediction is score > threshold (a 0.5 tie predicts 0, like a tied vote).
MetricsBundle evaluate_scores(std::span<const double> scores, std::span<const Label> labels, double threshold = 0.5);

// ---------------------------------------------------------------------------
// Classifier hook

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual void fit(const Dataset& train) = 0;
  virtual std::vector<double> predict_proba(const Matrix& xs) const = 0;
  virtual std::string name() const = 0;
};

class ForestClassifier final : public Classifier {
 public:
  explicit ForestClassifier(ForestParams params) : params_(params) {}
  void fit(const Dataset& train) override { forest_ = fit_forest(train, params_); }
  std::vector<double> predict_proba(const Matrix& xs) const override { return forest_.predict_proba(xs); }
  std::string name() const override { return "forest"; }
  const Forest& forest() const noexcept { return forest_; }

 private:
  ForestParams params_;
  Forest forest_;
};

struct ClassifierSpec {
  std::string kind = "forest";  // "forest" or "logistic"
  ForestParams forest = ForestParams::evaluator_defaults();
  double l2 = 1e-4;
};

// Returns a fresh classifier; forest seeds are replaced by `seed`.
std::unique_ptr<Classifier> make_classifier(const ClassifierSpec& spec, std::uint64_t seed);

MetricsBundle train_and_evaluate(const ClassifierSpec& spec, std::uint64_t seed, const Dataset& train,
                                 const Dataset& test);

// ---------------------------------------------------------------------------
// Cross-cluster transfer

struct CrossClusterResult {
  std::size_t train_cluster = 0;
  std::size_t test_cluster = 0;
  bool augmented = false;
  std::size_t train_size = 0;
  MetricsBundle metrics;
};

struct CrossClusterOptions {
  ClassifierSpec classifier;
  std::uint64_t seed = 0;
  bool augment = false;
  // Leave out synthetic rows distilled from the test-side cluster.
  bool exclude_test_cluster_synthetic = false;
};

// Every ordered pair (i, j), i != j: train on cluster i (plus synthetic rows
// when augmenting), test on cluster j. Pair (i, j) trains with seed
// derive_seed(seed, "cross_cluster", {i, j}), the same with or without
// augmentation. synthetic_by_cluster[c] holds the rows distilled from cluster c.
std::vector<CrossClusterResult> cross_cluster_eval(
    const std::vector<Dataset>& clusters, const std::vector<std::vector<SyntheticSample>>& synthetic_by_cluster,
    const CrossClusterOptions& options);

}  // namespace leafdistill
