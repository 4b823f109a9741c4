#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "leafdistill/data.hpp"

namespace leafdistill {

using ClassCounts = std::array<std::uint64_t, 2>;

// Class of a count vector: argmax, ties resolve to class 0.
inline Label majority_class(const ClassCounts& c) noexcept { return c[1] > c[0] ? 1 : 0; }

// Flat CART node. Leaves have feature == -1 and a leaf_id numbered in
// preorder from 0. Internal nodes route x[feature] <= threshold to `left`.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t leaf_id = -1;
  std::int32_t depth = 0;
  ClassCounts counts{0, 0};

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class Tree {
 public:
  Tree() = default;
  explicit Tree(std::vector<TreeNode> nodes);

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  std::size_t leaf_count() const noexcept { return leaf_nodes_.size(); }
  std::size_t depth() const;

  // Node index of the leaf reached by x, and the leaf's id.
  std::size_t route(std::span<const double> x) const;
  std::int32_t apply(std::span<const double> x) const { return nodes_[route(x)].leaf_id; }

  const TreeNode& leaf(std::int32_t leaf_id) const;
  // Node indices from the root down to (and including) the given leaf.
  std::vector<std::size_t> path_to_leaf(std::int32_t leaf_id) const;

  friend bool operator==(const Tree& a, const Tree& b) { return a.nodes_ == b.nodes_; }

 private:
  std::vector<TreeNode> nodes_;
  std::vector<std::size_t> leaf_nodes_;  // leaf_id -> node index
  std::vector<std::int32_t> parent_;
};

struct ForestParams {
  std::size_t n_trees = 10;
  std::optional<std::size_t> max_depth;  // unlimited when empty
  std::size_t min_samples_leaf = 5;
  // Features tried per split. 0 means ceil(sqrt(d)); a fraction in (0, 1]
  // takes precedence when set.
  std::size_t features_per_split = 0;
  std::optional<double> features_fraction;
  bool bootstrap = true;
  std::uint64_t seed = 0;

  std::size_t resolve_features_per_split(std::size_t d) const;
  void validate() const;

  // Distillation generator defaults: 10 trees.
  static ForestParams generator_defaults();
  // Evaluation classifier defaults: 100 trees.
  static ForestParams evaluator_defaults();

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

class Forest {
 public:
  Forest() = default;
  Forest(std::vector<Tree> trees, ForestParams params, std::size_t feature_count,
         std::vector<std::string> feature_names = {});

  const std::vector<Tree>& trees() const noexcept { return trees_; }
  std::size_t n_trees() const noexcept { return trees_.size(); }
  std::size_t feature_count() const noexcept { return feature_count_; }
  const ForestParams& params() const noexcept { return params_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }

  // One leaf id per tree. Throws ArgumentError on wrong length or non-finite x.
  std::vector<std::int32_t> apply(std::span<const double> x) const;

  std::vector<Label> tree_votes(std::span<const double> x) const;
  // Hard-vote share per class; entries sum to 1.
  std::array<double, 2> vote_proportions(std::span<const double> x) const;
  // Majority of hard votes; a tied forest votes 0.
  Label predict_label(std::span<const double> x) const;

  // Mean over trees of the reached leaf's class-1 frequency.
  double predict_proba(std::span<const double> x) const;
  std::vector<double> predict_proba(const Matrix& xs) const;

  std::string to_json() const;
  static Forest from_json(const std::string& text);

  friend bool operator==(const Forest&, const Forest&) = default;

 private:
  void check_input(std::span<const double> x) const;

  std::vector<Tree> trees_;
  ForestParams params_;
  std::size_t feature_count_ = 0;
  std::vector<std::string> feature_names_;
};

// Grows one CART tree on the given (possibly repeated) row indices.
Tree fit_tree(const Matrix& x, std::span<const Label> y, std::span<const std::size_t> rows,
              const ForestParams& params, std::uint64_t seed);

// Greedy Gini CART per tree, each on a bootstrap sample iff params.bootstrap.
// Tree t draws from stream derive_seed(params.seed, {t}); trees train in parallel.
Forest fit_forest(const Dataset& ds, const ForestParams& params);

}  // namespace leafdistill
