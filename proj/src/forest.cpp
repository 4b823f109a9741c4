#include "leafdistill/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "leafdistill/error.hpp"
#include "leafdistill/parallel.hpp"
#include "leafdistill/rng.hpp"

namespace leafdistill {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Tree

Tree::Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw ArgumentError("tree has no nodes");
  parent_.assign(nodes_.size(), -1);
  std::int32_t next_leaf = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    TreeNode& n = nodes_[i];
    if (n.is_leaf()) {
      n.leaf_id = next_leaf++;
      leaf_nodes_.push_back(i);
      continue;
    }
    const auto size = static_cast<std::int32_t>(nodes_.size());
    if (n.left <= static_cast<std::int32_t>(i) || n.right <= static_cast<std::int32_t>(i) || n.left >= size ||
        n.right >= size)
      throw ArgumentError("tree node children must follow their parent in preorder");
    n.leaf_id = -1;
    parent_[static_cast<std::size_t>(n.left)] = static_cast<std::int32_t>(i);
    parent_[static_cast<std::size_t>(n.right)] = static_cast<std::int32_t>(i);
  }
}

std::size_t Tree::depth() const {
  std::int32_t d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return static_cast<std::size_t>(d);
}

std::size_t Tree::route(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const TreeNode& n = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return i;
}

const TreeNode& Tree::leaf(std::int32_t leaf_id) const {
  if (leaf_id < 0 || static_cast<std::size_t>(leaf_id) >= leaf_nodes_.size())
    throw LookupError("unknown leaf id " + std::to_string(leaf_id));
  return nodes_[leaf_nodes_[static_cast<std::size_t>(leaf_id)]];
}

std::vector<std::size_t> Tree::path_to_leaf(std::int32_t leaf_id) const {
  leaf(leaf_id);
  std::vector<std::size_t> path;
  auto i = static_cast<std::int32_t>(leaf_nodes_[static_cast<std::size_t>(leaf_id)]);
  while (i >= 0) {
    path.push_back(static_cast<std::size_t>(i));
    i = parent_[static_cast<std::size_t>(i)];
  }
  std::reverse(path.begin(), path.end());
  return path;
}

// ---------------------------------------------------------------------------
// Params

std::size_t ForestParams::resolve_features_per_split(std::size_t d) const {
  std::size_t m;
  if (features_fraction) {
    m = static_cast<std::size_t>(std::ceil(*features_fraction * static_cast<double>(d)));
  } else if (features_per_split > 0) {
    m = features_per_split;
  } else {
    m = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
  }
  if (m > d) throw ArgumentError("features_per_split exceeds feature count");
  return std::max<std::size_t>(m, 1);
}

void ForestParams::validate() const {
  if (n_trees < 1) throw ArgumentError("n_trees must be >= 1");
  if (min_samples_leaf < 1) throw ArgumentError("min_samples_leaf must be >= 1");
  if (max_depth && *max_depth < 1) throw ArgumentError("max_depth must be >= 1");
  if (features_fraction && !(*features_fraction > 0.0 && *features_fraction <= 1.0))
    throw ArgumentError("features_fraction must lie in (0, 1]");
}

ForestParams ForestParams::generator_defaults() { return ForestParams{}; }

ForestParams ForestParams::evaluator_defaults() {
  ForestParams p;
  p.n_trees = 100;
  return p;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct SplitCandidate {
  double score;  // n * weighted child Gini
  std::int32_t feature;
  double threshold;
};

bool better(const SplitCandidate& a, const SplitCandidate& b) {
  if (a.score != b.score) return a.score < b.score;
  if (a.feature != b.feature) return a.feature < b.feature;
  return a.threshold < b.threshold;
}

double gini_mass(double c0, double c1) {
  const double n = c0 + c1;
  return n > 0.0 ? n - (c0 * c0 + c1 * c1) / n : 0.0;
}

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const Label> y, const ForestParams& params, std::uint64_t seed)
      : x_(x), y_(y), params_(params), rng_(seed), mtry_(params.resolve_features_per_split(x.cols())) {}

  std::vector<TreeNode> build(std::vector<std::size_t> rows) {
    rows_ = std::move(rows);
    grow(0, rows_.size(), 0);
    return std::move(nodes_);
  }

 private:
  std::int32_t grow(std::size_t begin, std::size_t end, std::int32_t depth) {
    const auto index = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    TreeNode node;
    node.depth = depth;
    for (std::size_t i = begin; i < end; ++i) ++node.counts[y_[rows_[i]]];

    const std::size_t n = end - begin;
    const bool pure = node.counts[0] == 0 || node.counts[1] == 0;
    const bool depth_capped = params_.max_depth && static_cast<std::size_t>(depth) >= *params_.max_depth;
    std::optional<SplitCandidate> split;
    if (!pure && !depth_capped && n >= 2 * params_.min_samples_leaf) split = best_split(begin, end, node.counts);

    if (!split) {
      nodes_[static_cast<std::size_t>(index)] = node;
      return index;
    }
    const auto f = static_cast<std::size_t>(split->feature);
    const double thr = split->threshold;
    auto mid = std::stable_partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                     rows_.begin() + static_cast<std::ptrdiff_t>(end),
                                     [&](std::size_t r) { return x_(r, f) <= thr; });
    const auto split_at = static_cast<std::size_t>(mid - rows_.begin());
    node.feature = split->feature;
    node.threshold = thr;
    node.left = grow(begin, split_at, depth + 1);
    node.right = grow(split_at, end, depth + 1);
    nodes_[static_cast<std::size_t>(index)] = node;
    return index;
  }

  std::optional<SplitCandidate> best_split(std::size_t begin, std::size_t end, const ClassCounts& counts) {
    const std::size_t n = end - begin;
    const std::size_t d = x_.cols();
    std::vector<std::size_t> features(d);
    std::iota(features.begin(), features.end(), 0);
    rng_.shuffle(features.begin(), features.end());

    const double parent = gini_mass(static_cast<double>(counts[0]), static_cast<double>(counts[1]));
    const std::size_t min_leaf = params_.min_samples_leaf;
    std::optional<SplitCandidate> best;
    std::size_t examined = 0;
    values_.resize(n);

    // Constant features do not count toward the per-split budget.
    for (std::size_t f : features) {
      if (examined == mtry_) break;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = rows_[begin + i];
        values_[i] = {x_(r, f), y_[r]};
      }
      std::sort(values_.begin(), values_.end());
      if (values_.front().first == values_.back().first) continue;
      ++examined;

      double l0 = 0.0, l1 = 0.0;
      const double t0 = static_cast<double>(counts[0]), t1 = static_cast<double>(counts[1]);
      for (std::size_t i = 0; i + 1 < n; ++i) {
        (values_[i].second ? l1 : l0) += 1.0;
        const double a = values_[i].first, b = values_[i + 1].first;
        if (a == b) continue;
        const std::size_t left_n = i + 1;
        if (left_n < min_leaf || n - left_n < min_leaf) continue;
        const double score = gini_mass(l0, l1) + gini_mass(t0 - l0, t1 - l1);
        double thr = a / 2.0 + b / 2.0;
        if (!(thr >= a && thr < b)) thr = a;
        SplitCandidate cand{score, static_cast<std::int32_t>(f), thr};
        if (!best || better(cand, *best)) best = cand;
      }
    }
    if (best && best->score < parent - 1e-12 * static_cast<double>(n)) return best;
    return std::nullopt;
  }

  const Matrix& x_;
  std::span<const Label> y_;
  const ForestParams& params_;
  Rng rng_;
  std::size_t mtry_;
  std::vector<std::size_t> rows_;
  std::vector<TreeNode> nodes_;
  std::vector<std::pair<double, Label>> values_;
};

}  // namespace

Tree fit_tree(const Matrix& x, std::span<const Label> y, std::span<const std::size_t> rows,
              const ForestParams& params, std::uint64_t seed) {
  if (rows.empty()) throw ArgumentError("cannot fit a tree on zero rows");
  TreeBuilder builder(x, y, params, seed);
  return Tree(builder.build(std::vector<std::size_t>(rows.begin(), rows.end())));
}

Forest fit_forest(const Dataset& ds, const ForestParams& params) {
  params.validate();
  const std::size_t n = ds.size();
  if (n < 2) throw ArgumentError("fit requires at least 2 samples");
  if (ds.features.rows() != n) throw ArgumentError("feature rows != label count");
  params.resolve_features_per_split(ds.feature_count());

  std::vector<Tree> trees(params.n_trees);
  parallel_for(params.n_trees, [&](std::size_t t) {
    const std::uint64_t stream = derive_seed(params.seed, {static_cast<std::uint64_t>(t)});
    std::vector<std::size_t> rows(n);
    if (params.bootstrap) {
      Rng boot(derive_seed(stream, "bootstrap"));
      for (auto& r : rows) r = static_cast<std::size_t>(boot.index(n));
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    trees[t] = fit_tree(ds.features, ds.labels, rows, params, derive_seed(stream, "splits"));
  });
  return Forest(std::move(trees), params, ds.feature_count(), ds.feature_names);
}

// ---------------------------------------------------------------------------
// Forest inference

Forest::Forest(std::vector<Tree> trees, ForestParams params, std::size_t feature_count,
               std::vector<std::string> feature_names)
    : trees_(std::move(trees)), params_(params), feature_count_(feature_count),
      feature_names_(std::move(feature_names)) {
  params_.n_trees = trees_.size();
}

void Forest::check_input(std::span<const double> x) const {
  if (x.size() != feature_count_)
    throw ArgumentError("expected " + std::to_string(feature_count_) + " features, got " +
                        std::to_string(x.size()));
  for (double v : x)
    if (!std::isfinite(v)) throw ArgumentError("non-finite feature value");
}

std::vector<std::int32_t> Forest::apply(std::span<const double> x) const {
  check_input(x);
  std::vector<std::int32_t> ids;
  ids.reserve(trees_.size());
  for (const Tree& t : trees_) ids.push_back(t.apply(x));
  return ids;
}

std::vector<Label> Forest::tree_votes(std::span<const double> x) const {
  check_input(x);
  std::vector<Label> votes;
  votes.reserve(trees_.size());
  for (const Tree& t : trees_) votes.push_back(majority_class(t.nodes()[t.route(x)].counts));
  return votes;
}

std::array<double, 2> Forest::vote_proportions(std::span<const double> x) const {
  std::size_t ones = 0;
  for (Label v : tree_votes(x)) ones += v;
  const double p1 = static_cast<double>(ones) / static_cast<double>(trees_.size());
  const double p0 = static_cast<double>(trees_.size() - ones) / static_cast<double>(trees_.size());
  return {p0, p1};
}

Label Forest::predict_label(std::span<const double> x) const {
  const auto p = vote_proportions(x);
  return p[1] > p[0] ? 1 : 0;
}

double Forest::predict_proba(std::span<const double> x) const {
  check_input(x);
  double sum = 0.0;
  for (const Tree& t : trees_) {
    const auto& c = t.nodes()[t.route(x)].counts;
    sum += static_cast<double>(c[1]) / static_cast<double>(c[0] + c[1]);
  }
  return sum / static_cast<double>(trees_.size());
}

std::vector<double> Forest::predict_proba(const Matrix& xs) const {
  if (xs.cols() != feature_count_) throw ArgumentError("column count does not match forest");
  std::vector<double> out(xs.rows());
  parallel_for(xs.rows(), [&](std::size_t i) { out[i] = predict_proba(xs.row(i)); });
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr int kForestFormatVersion = 1;

json node_to_json(const std::vector<TreeNode>& nodes, std::size_t i) {
  const TreeNode& n = nodes[i];
  json j;
  j["counts"] = {n.counts[0], n.counts[1]};
  j["depth"] = n.depth;
  if (n.is_leaf()) {
    j["leaf"] = n.leaf_id;
  } else {
    j["feature"] = n.feature;
    j["threshold"] = n.threshold;
    j["left"] = node_to_json(nodes, static_cast<std::size_t>(n.left));
    j["right"] = node_to_json(nodes, static_cast<std::size_t>(n.right));
  }
  return j;
}

std::int32_t node_from_json(const json& j, std::vector<TreeNode>& nodes) {
  const auto index = static_cast<std::int32_t>(nodes.size());
  nodes.emplace_back();
  TreeNode n;
  n.counts = {j.at("counts").at(0).get<std::uint64_t>(), j.at("counts").at(1).get<std::uint64_t>()};
  n.depth = j.at("depth").get<std::int32_t>();
  if (j.contains("feature")) {
    n.feature = j.at("feature").get<std::int32_t>();
    n.threshold = j.at("threshold").get<double>();
    n.left = node_from_json(j.at("left"), nodes);
    n.right = node_from_json(j.at("right"), nodes);
  }
  nodes[static_cast<std::size_t>(index)] = n;
  return index;
}

json params_to_json(const ForestParams& p) {
  json j;
  j["n_trees"] = p.n_trees;
  j["max_depth"] = p.max_depth ? json(*p.max_depth) : json(nullptr);
  j["min_samples_leaf"] = p.min_samples_leaf;
  j["features_per_split"] = p.features_per_split;
  j["features_fraction"] = p.features_fraction ? json(*p.features_fraction) : json(nullptr);
  j["bootstrap"] = p.bootstrap;
  j["seed"] = p.seed;
  return j;
}

ForestParams params_from_json(const json& j) {
  ForestParams p;
  p.n_trees = j.at("n_trees").get<std::size_t>();
  if (!j.at("max_depth").is_null()) p.max_depth = j.at("max_depth").get<std::size_t>();
  p.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
  p.features_per_split = j.at("features_per_split").get<std::size_t>();
  if (!j.at("features_fraction").is_null()) p.features_fraction = j.at("features_fraction").get<double>();
  p.bootstrap = j.at("bootstrap").get<bool>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

}  // namespace

std::string Forest::to_json() const {
  json j;
  j["format"] = "leafdistill-forest";
  j["version"] = kForestFormatVersion;
  j["feature_count"] = feature_count_;
  j["feature_names"] = feature_names_;
  j["params"] = params_to_json(params_);
  json trees = json::array();
  for (const Tree& t : trees_) trees.push_back(node_to_json(t.nodes(), 0));
  j["trees"] = std::move(trees);
  return j.dump(1);
}

Forest Forest::from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.value("format", "") != "leafdistill-forest") throw ArgumentError("not a leafdistill forest document");
  if (j.at("version").get<int>() != kForestFormatVersion)
    throw ArgumentError("unsupported forest format version " + std::to_string(j.at("version").get<int>()));
  std::vector<Tree> trees;
  for (const json& root : j.at("trees")) {
    std::vector<TreeNode> nodes;
    node_from_json(root, nodes);
    trees.emplace_back(std::move(nodes));
  }
  return Forest(std::move(trees), params_from_json(j.at("params")), j.at("feature_count").get<std::size_t>(),
                j.at("feature_names").get<std::vector<std::string>>());
}

}  // namespace leafdistill
