#include "leafdistill/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "leafdistill/error.hpp"
#include "leafdistill/logistic.hpp"
#include "leafdistill/parallel.hpp"
#include "leafdistill/rng.hpp"

namespace leafdistill {

Confusion confusion(std::span<const Label> preds, std::span<const Label> labels) {
  if (preds.size() != labels.size()) throw ArgumentError("prediction and label lengths differ");
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i]) {
      ++(labels[i] ? c.tp : c.fp);
    } else {
      ++(labels[i] ? c.fn : c.tn);
    }
  }
  return c;
}

PrecisionRecall precision_recall(std::span<const Label> preds, std::span<const Label> labels) {
  const Confusion c = confusion(preds, labels);
  PrecisionRecall pr;
  if (c.tp + c.fp == 0) {
    pr.precision_undefined = true;
  } else {
    pr.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  }
  if (c.tp + c.fn == 0) {
    pr.recall_undefined = true;
  } else {
    pr.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  }
  return pr;
}

double micro_f1(std::span<const Label> preds, std::span<const Label> labels) {
  const Confusion c = confusion(preds, labels);
  if (c.total() == 0) throw UndefinedMetricError("micro-F1 of an empty set");
  // Pool per-class counts: class 1 contributes (tp, fp, fn), class 0 (tn, fn, fp).
  const std::uint64_t tp = c.tp + c.tn;
  const std::uint64_t fp = c.fp + c.fn;
  const std::uint64_t fn = c.fn + c.fp;
  return static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
}

double accuracy(std::span<const Label> preds, std::span<const Label> labels) {
  const Confusion c = confusion(preds, labels);
  if (c.total() == 0) throw UndefinedMetricError("accuracy of an empty set");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double roc_auc(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw ArgumentError("score and label lengths differ");
  const std::size_t n = scores.size();
  std::uint64_t n_pos = 0;
  for (Label l : labels) n_pos += l;
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("AUC needs both classes");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the positive rank sum, kept integral: a tie block spanning ranks
  // [lo, hi] (1-based) gives each member rank (lo + hi) / 2.
  std::uint64_t twice_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    std::uint64_t pos_in_block = 0;
    for (std::size_t k = i; k < j; ++k) pos_in_block += labels[order[k]];
    twice_rank_sum += pos_in_block * static_cast<std::uint64_t>((i + 1) + j);
    i = j;
  }
  const std::uint64_t twice_u = twice_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MetricsBundle evaluate_scores(std::span<const double> scores, std::span<const Label> labels, double threshold) {
  if (scores.size() != labels.size()) throw ArgumentError("score and label lengths differ");
  std::vector<Label> preds(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i] > threshold ? 1 : 0;
  MetricsBundle m;
  const auto pr = precision_recall(preds, labels);
  m.precision = pr.precision;
  m.recall = pr.recall;
  m.precision_undefined = pr.precision_undefined;
  m.micro_f1 = micro_f1(preds, labels);
  m.n_test = labels.size();
  m.n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label{1}));
  m.threshold = threshold;
  try {
    m.auc = roc_auc(scores, labels);
  } catch (const UndefinedMetricError&) {
    m.auc = 0.0;
    m.auc_undefined = true;
  }
  return m;
}

// ---------------------------------------------------------------------------

namespace {

class LogisticClassifier final : public Classifier {
 public:
  explicit LogisticClassifier(double l2) { options_.l2 = l2; }
  void fit(const Dataset& train) override { model_.fit(train.features, train.labels, options_); }
  std::vector<double> predict_proba(const Matrix& xs) const override { return model_.predict_proba(xs); }
  std::string name() const override { return "logistic"; }

 private:
  LogisticOptions options_;
  LogisticRegression model_;
};

}  // namespace

std::unique_ptr<Classifier> make_classifier(const ClassifierSpec& spec, std::uint64_t seed) {
  if (spec.kind == "forest") {
    ForestParams p = spec.forest;
    p.seed = seed;
    return std::make_unique<ForestClassifier>(p);
  }
  if (spec.kind == "logistic") return std::make_unique<LogisticClassifier>(spec.l2);
  throw ArgumentError("unknown classifier kind '" + spec.kind + "'");
}

MetricsBundle train_and_evaluate(const ClassifierSpec& spec, std::uint64_t seed, const Dataset& train,
                                 const Dataset& test) {
  auto clf = make_classifier(spec, seed);
  clf->fit(train);
  const auto scores = clf->predict_proba(test.features);
  return evaluate_scores(scores, test.labels);
}

std::vector<CrossClusterResult> cross_cluster_eval(
    const std::vector<Dataset>& clusters, const std::vector<std::vector<SyntheticSample>>& synthetic_by_cluster,
    const CrossClusterOptions& options) {
  const std::size_t k = clusters.size();
  if (k < 2) throw ArgumentError("cross-cluster evaluation needs at least two clusters");
  if (options.augment && synthetic_by_cluster.size() != k)
    throw ArgumentError("synthetic_by_cluster must have one entry per cluster");

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (i != j) pairs.emplace_back(i, j);

  std::vector<CrossClusterResult> results(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t p) {
    const auto [i, j] = pairs[p];
    Dataset train = clusters[i];
    if (options.augment) {
      std::vector<Dataset> parts{clusters[i]};
      for (std::size_t c = 0; c < k; ++c) {
        if (options.exclude_test_cluster_synthetic && c == j) continue;
        if (synthetic_by_cluster[c].empty()) continue;
        parts.push_back(to_dataset(synthetic_by_cluster[c], clusters[i].feature_names, "syn" + std::to_string(c)));
      }
      train = concat(parts);
    }
    CrossClusterResult& r = results[p];
    r.train_cluster = i;
    r.test_cluster = j;
    r.augmented = options.augment;
    r.train_size = train.size();
    r.metrics = train_and_evaluate(options.classifier, derive_seed(options.seed, "cross_cluster", {i, j}), train,
                                   clusters[j]);
  });
  return results;
}

}  // namespace leafdistill
