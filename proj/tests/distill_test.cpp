#include "leafdistill/distill.hpp"

#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "leafdistill/error.hpp"

namespace leafdistill {
namespace {

Dataset mini_fraud() {
  IngestOptions o;
  o.label_column = "isFraud";
  o.id_column = "TransactionID";
  return standardize(ingest_csv(std::string(LEAFDISTILL_FIXTURE_DIR) + "/mini_fraud.csv", o).dataset).dataset;
}

Dataset make(std::vector<std::vector<double>> rows, std::vector<Label> labels) {
  Dataset ds;
  ds.feature_names = testing::numbered_features(rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ds.features.append_row(rows[i]);
    ds.sample_ids.push_back(std::to_string(i));
  }
  ds.labels = std::move(labels);
  return ds;
}

Forest one_leaf_forest(std::size_t d) {
  TreeNode leaf;
  leaf.counts = {1, 1};
  return Forest({Tree({leaf})}, ForestParams{}, d, testing::numbered_features(d));
}

// x0 <= 0.5 -> leaf 0, else leaf 1.
Forest depth_one_forest() {
  TreeNode root, l, r;
  root.feature = 0;
  root.threshold = 0.5;
  root.left = 1;
  root.right = 2;
  l.depth = r.depth = 1;
  return Forest({Tree({root, l, r})}, ForestParams{}, 2, testing::numbered_features(2));
}

TEST(Regions, BoundsAreMinMaxOverLeafSamples) {
  const Dataset ds = make({{1, 2}, {3, 0}}, {0, 1});
  const auto regions = extract_regions(one_leaf_forest(2), ds);
  ASSERT_EQ(regions.size(), 1u);
  EXPECT_EQ(regions[0].lower, (std::vector<double>{1, 0}));
  EXPECT_EQ(regions[0].upper, (std::vector<double>{3, 2}));
  EXPECT_EQ(regions[0].support, 2u);
  EXPECT_FALSE(regions[0].degenerate());
}

TEST(Regions, SingletonLeafIsDegenerateAndSamplesExactly) {
  const Dataset ds = make({{4, 4}}, {1});
  const auto regions = extract_regions(one_leaf_forest(2), ds);
  EXPECT_EQ(regions[0].lower, regions[0].upper);
  EXPECT_TRUE(regions[0].degenerate());
  const auto samples = synthesize(regions, {1, 1, false});
  ASSERT_EQ(samples.size(), 1u);
  EXPECT_EQ(samples[0].x, (std::vector<double>{4, 4}));
  EXPECT_TRUE(samples[0].degenerate);
  EXPECT_TRUE(synthesize(regions, {1, 1, true}).empty());
}

TEST(Regions, SupportsPerTreeSumToSampleCount) {
  const Dataset ds = mini_fraud();
  ForestParams p;
  p.seed = 9;
  const Forest f = fit_forest(ds, p);
  const auto regions = extract_regions(f, ds);
  std::map<std::size_t, std::size_t> support_by_tree;
  for (const auto& r : regions) {
    support_by_tree[r.tree_id] += r.support;
    EXPECT_EQ(r.support, r.class_counts[0] + r.class_counts[1]);
    EXPECT_GE(r.support, 1u);
    for (std::size_t k = 0; k < r.lower.size(); ++k) EXPECT_LE(r.lower[k], r.upper[k]);
  }
  ASSERT_EQ(support_by_tree.size(), f.n_trees());
  for (const auto& [tree, total] : support_by_tree) EXPECT_EQ(total, ds.size()) << "tree " << tree;

  // Brute-force recount per (tree, leaf).
  for (const auto& r : regions) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) count += f.trees()[r.tree_id].apply(ds.features.row(i)) == r.leaf_id;
    EXPECT_EQ(count, r.support);
  }
}

TEST(Regions, LiftUsesGlobalRate) {
  const Dataset ds = make({{0, 0}, {1, 1}, {0.2, 0.1}, {0.9, 0.3}}, {1, 1, 1, 1});
  const auto regions = extract_regions(depth_one_forest(), ds, 0.25);
  for (const auto& r : regions) EXPECT_DOUBLE_EQ(r.lift, 4.0);
  EXPECT_DOUBLE_EQ(extract_regions(depth_one_forest(), ds, 0.0)[0].lift, 0.0);
}

TEST(Regions, EveryLeafSamplesSatisfyThePredicate) {
  const Dataset ds = testing::random_dataset(700, 5, 4, 0.2);
  const Forest f = fit_forest(ds, ForestParams::generator_defaults());
  const auto regions = extract_regions(f, ds);
  for (const auto& r : regions) {
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const bool in_leaf = f.trees()[r.tree_id].apply(ds.features.row(i)) == r.leaf_id;
      EXPECT_EQ(r.predicate.holds(ds.features.row(i)), in_leaf);
    }
  }
}

TEST(Predicate, SameFeatureConstraintsMergeToTightestInterval) {
  // Three nested splits on x0; leaves in preorder are a, b, c, e.
  TreeNode n0, n1, a, n3, b, c, e;
  n0.feature = 0;
  n0.threshold = 2.0;
  n0.left = 1;
  n0.right = 6;
  n1.feature = 0;
  n1.threshold = 1.0;
  n1.left = 2;
  n1.right = 3;
  n3.feature = 0;
  n3.threshold = -5.0;
  n3.left = 4;
  n3.right = 5;
  const Tree t({n0, n1, a, n3, b, c, e});
  const auto names = testing::numbered_features(2);
  EXPECT_EQ(leaf_predicate(t, 0, names).to_string(), "x0 ≤ 1");
  EXPECT_EQ(leaf_predicate(t, 2, names).to_string(), "x0 > 1 AND x0 ≤ 2");
  EXPECT_EQ(leaf_predicate(t, 1, names).to_string(), "x0 > 1 AND x0 ≤ -5");
  EXPECT_EQ(leaf_predicate(t, 3, names).to_string(), "x0 > 2");
  EXPECT_EQ(leaf_predicate(Tree({a}), 0, names).to_string(), "TRUE");
}

TEST(Synthesize, UniformCoordinatesHaveLawOfLargeNumbersMean) {
  LeafRegion r;
  r.lower = {0, 0};
  r.upper = {1, 1};
  r.support = 2;
  const auto samples = synthesize({r}, {123, 10000, false});
  ASSERT_EQ(samples.size(), 10000u);
  double m0 = 0, m1 = 0, v0 = 0;
  for (const auto& s : samples) {
    m0 += s.x[0];
    m1 += s.x[1];
    v0 += (s.x[0] - 0.5) * (s.x[0] - 0.5);
  }
  EXPECT_NEAR(m0 / 1e4, 0.5, 0.02);
  EXPECT_NEAR(m1 / 1e4, 0.5, 0.02);
  EXPECT_NEAR(v0 / 1e4, 1.0 / 12.0, 0.005);
}

TEST(Synthesize, DeterministicAndPassesScaleExactly) {
  const Dataset ds = mini_fraud();
  const auto regions = extract_regions(fit_forest(ds, ForestParams::generator_defaults()), ds);
  const auto one = synthesize(regions, {5, 1, false});
  const auto two = synthesize(regions, {5, 2, false});
  EXPECT_EQ(one, synthesize(regions, {5, 1, false}));
  EXPECT_EQ(one.size(), regions.size());
  EXPECT_EQ(two.size(), 2 * regions.size());
  // First pass is shared; the second pass draws fresh values.
  EXPECT_TRUE(std::equal(one.begin(), one.end(), two.begin()));
  EXPECT_NE(two[0].x, two[regions.size()].x);
  EXPECT_NE(synthesize(regions, {6, 1, false}), one);
  EXPECT_THROW(synthesize({}, {5, 1, false}), ArgumentError);
}

TEST(Distill, UniformLabelsGiveOneSamplePerTree) {
  Dataset ds = testing::random_dataset(300, 3, 2);
  std::fill(ds.labels.begin(), ds.labels.end(), 1);
  DistillOptions o;
  o.forest.n_trees = 6;
  const auto d = distill(ds, o);
  ASSERT_EQ(d.samples.size(), 6u);
  for (const auto& s : d.samples) EXPECT_EQ(s.label, 1);
}

TEST(Distill, SampleCountEqualsUniqueLeafEnumeration) {
  const Dataset ds = mini_fraud();
  DistillOptions o;
  o.forest.seed = 42;
  const auto d = distill(ds, o);
  std::set<std::pair<std::size_t, std::int32_t>> leaves;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto ids = d.forest.apply(ds.features.row(i));
    for (std::size_t t = 0; t < ids.size(); ++t) leaves.emplace(t, ids[t]);
  }
  EXPECT_EQ(d.samples.size(), leaves.size());
  EXPECT_GT(d.ratio(ds.size()), 0.0);
  EXPECT_LT(d.ratio(ds.size()), 1.0);
}

TEST(Distill, ContainmentRoutingAndLabelConsistency) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Dataset ds = testing::random_dataset(400 + 50 * seed, 2 + seed % 6, seed, 0.25);
    DistillOptions o;
    o.forest.seed = seed;
    o.synthesis = {seed, 2, false};
    const auto d = distill(ds, o);
    std::map<std::pair<std::size_t, std::int32_t>, const LeafRegion*> by_id;
    for (const auto& r : d.regions) by_id[{r.tree_id, r.leaf_id}] = &r;
    for (const auto& s : d.samples) {
      const LeafRegion& r = *by_id.at({s.tree_id, s.leaf_id});
      EXPECT_TRUE(r.contains(s.x));
      EXPECT_EQ(d.forest.trees()[s.tree_id].apply(s.x), s.leaf_id);
      EXPECT_EQ(s.label, majority_class(r.class_counts));
      EXPECT_TRUE(r.predicate.holds(s.x));
    }
  }
}

TEST(Io, RegionsJsonlRoundTrip) {
  const Dataset ds = mini_fraud();
  const auto regions = extract_regions(fit_forest(ds, ForestParams::generator_defaults()), ds);
  const std::string path = ::testing::TempDir() + "/regions.jsonl";
  write_regions_jsonl(path, regions);
  EXPECT_EQ(read_regions_jsonl(path), regions);
}

TEST(Io, SyntheticCsvRoundTrip) {
  const Dataset ds = mini_fraud();
  auto samples = distill(ds, DistillOptions{}).samples;
  for (std::size_t i = 0; i < samples.size(); i += 2) samples[i].disagreement = 0.1 * static_cast<double>(i % 5);
  const std::string path = ::testing::TempDir() + "/syn.csv";
  write_synthetic_csv(path, samples, ds.feature_names, "isFraud");
  EXPECT_EQ(read_synthetic_csv(path, ds.feature_names, "isFraud"), samples);
}

TEST(Rules, OrderedByLiftThenSupport) {
  LeafRegion a, b, c;
  a.tree_id = 0, a.leaf_id = 0, a.lift = 3.0, a.support = 4, a.class_counts = {1, 3};
  b.tree_id = 0, b.leaf_id = 1, b.lift = 1.5, b.support = 10, b.class_counts = {5, 5};
  c.tree_id = 1, c.leaf_id = 0, c.lift = 1.5, c.support = 12, c.class_counts = {6, 6};
  const auto rows = rule_summary({b, a, c}, 3, RuleOrder::Lift);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].lift, 3.0);
  EXPECT_EQ(rows[1].support, 12u);
  EXPECT_EQ(rows[2].support, 10u);
  EXPECT_EQ(rule_summary({b, a, c}, 1, RuleOrder::Support).front().support, 12u);
  EXPECT_THROW(rule_summary({a}, 0, RuleOrder::Lift), ArgumentError);
}

TEST(Rules, PurePositiveLeafLiftIsInverseGlobalRate) {
  const Dataset ds = make({{0, 0}, {0.1, 0}, {1, 0}, {2, 0}}, {1, 1, 0, 0});
  const auto regions = extract_regions(depth_one_forest(), ds);
  EXPECT_DOUBLE_EQ(regions[0].lift, 1.0 / ds.positive_rate());
}

TEST(Rules, TopSupportMatchesRecount) {
  const Dataset ds = mini_fraud();
  const Forest f = fit_forest(ds, ForestParams::generator_defaults());
  const auto regions = extract_regions(f, ds);
  std::size_t best = 0;
  for (const auto& r : regions) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) n += f.trees()[r.tree_id].apply(ds.features.row(i)) == r.leaf_id;
    best = std::max(best, n);
  }
  EXPECT_EQ(rule_summary(regions, 1, RuleOrder::Support)[0].support, best);
}

TEST(Explain, DepthOneLeafRationale) {
  const Dataset ds = make({{0.2, 5}, {0.3, 1}, {0.9, 1}}, {1, 1, 0});
  const auto regions = extract_regions(depth_one_forest(), ds);
  SyntheticSample s;
  s.x = {0.25, 2};
  s.tree_id = 0;
  s.leaf_id = 0;
  s.disagreement = 0.2;
  const Rationale why = explain_sample(s, regions);
  EXPECT_EQ(why.predicate, "x0 ≤ 0.5");
  EXPECT_EQ(why.support, 2u);
  EXPECT_EQ(why.disagreement, 0.2);
  EXPECT_FALSE(why.degenerate);

  s.leaf_id = 1;
  s.degenerate = true;
  EXPECT_TRUE(explain_sample(s, regions).degenerate);
  s.leaf_id = 7;
  EXPECT_THROW(explain_sample(s, regions), LookupError);
}

TEST(Explain, RationalePredicateHoldsForEverySample) {
  const Dataset ds = mini_fraud();
  const auto d = distill(ds, DistillOptions{});
  for (const auto& s : d.samples) EXPECT_TRUE(explain_sample(s, d.regions).structured.holds(s.x));
}

}  // namespace
}  // namespace leafdistill
