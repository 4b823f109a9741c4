#include "leafdistill/privacy.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "leafdistill/error.hpp"

namespace leafdistill {
namespace {

Matrix rows(std::vector<std::vector<double>> r) {
  Matrix m;
  for (const auto& v : r) m.append_row(v);
  return m;
}

double brute_cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) ab += a[k] * b[k], aa += a[k] * a[k], bb += b[k] * b[k];
  return ab / std::sqrt(aa * bb);
}

ForestParams memorizing_params() {
  ForestParams p;
  p.n_trees = 30;
  p.min_samples_leaf = 1;
  return p;
}

TEST(Cosine, IdenticalSetsScoreOne) {
  const Dataset ds = testing::random_dataset(300, 5, 1);
  const auto rep = nn_cosine_similarity(ds.features, ds.features);
  EXPECT_NEAR(rep.mean_nn_cosine, 1.0, 1e-12);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_NEAR(rep.per_sample_max[i], 1.0, 1e-12);
}

TEST(Cosine, OrthogonalAndDiagonal) {
  EXPECT_NEAR(nn_cosine_similarity(rows({{1, 0}}), rows({{0, 3}})).mean_nn_cosine, 0.0, 1e-15);
  EXPECT_NEAR(nn_cosine_similarity(rows({{1, 0}}), rows({{1, 1}})).mean_nn_cosine, 1.0 / std::sqrt(2.0), 1e-12);
  const auto rep = nn_cosine_similarity(rows({{1, 0}, {0, 1}}), rows({{-1, 0}, {2, 2}, {0, 5}}));
  EXPECT_EQ(rep.nearest, (std::vector<std::size_t>{1, 2}));
  EXPECT_NEAR(rep.mean_nn_cosine, (1.0 / std::sqrt(2.0) + 1.0) / 2.0, 1e-12);
}

TEST(Cosine, ZeroNormRowIsNamed) {
  try {
    nn_cosine_similarity(rows({{1, 0}}), rows({{1, 1}, {0, 0}}), "real", "synthetic");
    FAIL();
  } catch (const ArgumentError& e) {
    EXPECT_NE(std::string(e.what()).find("synthetic row 1"), std::string::npos);
  }
  EXPECT_THROW(nn_cosine_similarity(rows({{1, 0}}), rows({{1, 0, 0}})), ArgumentError);
  EXPECT_THROW(nn_cosine_similarity(Matrix(), rows({{1, 0}})), ArgumentError);
}

TEST(Cosine, MatchesBruteForceAcrossBlockBoundaries) {
  const Dataset s = testing::random_dataset(300, 4, 2);
  const Dataset t = testing::random_dataset(1100, 4, 3);
  const auto rep = nn_cosine_similarity(s.features, t.features);
  double mean = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double best = -2;
    for (std::size_t j = 0; j < t.size(); ++j) best = std::max(best, brute_cosine(s.features.row(i), t.features.row(j)));
    EXPECT_NEAR(rep.per_sample_max[i], best, 1e-12);
    mean += best;
  }
  EXPECT_NEAR(rep.mean_nn_cosine, mean / 300.0, 1e-12);
}

TEST(Cosine, AddingTargetsNeverLowersTheMaximum) {
  const Dataset s = testing::random_dataset(100, 3, 4);
  const Dataset t = testing::random_dataset(200, 3, 5);
  Matrix more = t.features;
  const Dataset extra = testing::random_dataset(50, 3, 6);
  for (std::size_t i = 0; i < extra.size(); ++i) more.append_row(extra.features.row(i));
  const auto a = nn_cosine_similarity(s.features, t.features);
  const auto b = nn_cosine_similarity(s.features, more);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_GE(b.per_sample_max[i], a.per_sample_max[i]);
}

TEST(AttackFeatures, Values) {
  const Matrix f = attack_features(std::vector<double>{0.0, 0.5, 0.8});
  EXPECT_EQ(f(0, 2), 0.0);
  EXPECT_EQ(f(0, 1), 1.0);
  EXPECT_NEAR(f(1, 2), std::log(2.0), 1e-15);
  EXPECT_EQ(f(2, 1), 0.8);
  EXPECT_NEAR(f(2, 2), -(0.8 * std::log(0.8) + 0.2 * std::log(0.2)), 1e-15);
  EXPECT_EQ(attack_feature_names().size(), 3u);
}

TEST(Logistic, GradientVanishesAtSolution) {
  const Dataset ds = testing::random_dataset(600, 3, 8, 0.3);
  LogisticRegression m;
  LogisticOptions o;
  o.l2 = 1e-3;
  m.fit(ds.features, ds.labels, o);
  EXPECT_TRUE(m.converged());
  // Independent gradient of mean log-loss + l2/2 ||w||^2.
  std::vector<double> g(4, 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double z = m.bias();
    for (std::size_t j = 0; j < 3; ++j) z += m.weights()[j] * ds.features(i, j);
    const double r = 1.0 / (1.0 + std::exp(-z)) - ds.labels[i];
    for (std::size_t j = 0; j < 3; ++j) g[j] += r * ds.features(i, j) / 600.0;
    g[3] += r / 600.0;
  }
  double norm = 0;
  for (std::size_t j = 0; j < 3; ++j) norm += std::pow(g[j] + o.l2 * m.weights()[j], 2);
  norm += g[3] * g[3];
  EXPECT_LT(std::sqrt(norm), 1e-7);
  EXPECT_GT(m.weights()[0], 0.0);
}

TEST(Logistic, SeparableDataStaysFinite) {
  const Matrix x = rows({{-2}, {-1}, {1}, {2}});
  LogisticRegression m;
  m.fit(x, std::vector<Label>{0, 0, 1, 1});
  EXPECT_TRUE(std::isfinite(m.weights()[0]));
  EXPECT_GT(m.predict_proba(std::vector<double>{2.0}), 0.9);
  EXPECT_LT(m.predict_proba(std::vector<double>{-2.0}), 0.1);
}

TEST(Mia, ConstantTargetGivesChanceAuc) {
  const Dataset ds = testing::random_dataset(200, 3, 9, 0.3);
  TreeNode leaf;
  leaf.counts = {5, 5};
  const Forest target({Tree({leaf})}, ForestParams{}, 3, ds.feature_names);
  ShadowOptions so;
  so.shadow.n_trees = 10;
  const ShadowAttack sa = train_shadow_attack(ds, so);
  const auto rep = run_mia(target, sa.attack, ds.subset(sa.member_indices), ds.subset(sa.nonmember_indices), Matrix());
  EXPECT_EQ(rep.auc_train_vs_holdout, 0.5);
  EXPECT_EQ(rep.n_synthetic, 0u);
}

TEST(Mia, OverfitTargetLeaksMembership) {
  // Noisy labels that a fully grown forest memorizes.
  const Dataset all = testing::random_dataset(1200, 4, 10, 0.35);
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < all.size(); ++i) (i % 2 ? b : a).push_back(i);
  const Dataset members = all.subset(a), holdout = all.subset(b);
  ForestParams tp = memorizing_params();
  tp.seed = 3;
  const Forest target = fit_forest(members, tp);
  ShadowOptions so;
  so.shadow = memorizing_params();
  so.seed = 4;
  const ShadowAttack sa = train_shadow_attack(members, so);
  EXPECT_EQ(sa.member_indices.size() + sa.nonmember_indices.size(), members.size());
  EXPECT_EQ(sa.attack_training_labels.size(), members.size());
  const auto rep = run_mia(target, sa.attack, members, holdout, holdout.features);
  EXPECT_GT(rep.auc_train_vs_holdout, 0.6);
  EXPECT_GT(rep.mean_membership_prob_members, rep.mean_membership_prob_holdout);
  EXPECT_EQ(rep.auc_train_vs_synthetic, rep.auc_train_vs_holdout);
}

TEST(Mia, ShuffledMembershipIsNearChance) {
  const Dataset all = testing::random_dataset(1600, 4, 11, 0.35);
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < all.size(); ++i) (i % 2 ? b : a).push_back(i);
  const Dataset train = all.subset(a);
  ForestParams tp = memorizing_params();
  const Forest target = fit_forest(train, tp);
  ShadowOptions so;
  so.shadow = memorizing_params();
  const ShadowAttack sa = train_shadow_attack(train, so);
  // Both groups are unseen by the target model.
  const Dataset other = all.subset(b);
  std::vector<std::size_t> h1, h2;
  for (std::size_t i = 0; i < other.size(); ++i) (i % 2 ? h2 : h1).push_back(i);
  const auto rep = run_mia(target, sa.attack, other.subset(h1), other.subset(h2), Matrix());
  EXPECT_NEAR(rep.auc_train_vs_holdout, 0.5, 0.07);
}

TEST(Mia, Deterministic) {
  const Dataset ds = testing::random_dataset(300, 3, 12, 0.3);
  ShadowOptions so;
  so.shadow.n_trees = 8;
  so.seed = 77;
  const ShadowAttack x = train_shadow_attack(ds, so);
  const ShadowAttack y = train_shadow_attack(ds, so);
  EXPECT_EQ(x.member_indices, y.member_indices);
  EXPECT_EQ(x.attack.model.weights(), y.attack.model.weights());
  EXPECT_EQ(x.attack_training_features, y.attack_training_features);
}

TEST(Mia, ShadowNeedsBothClasses) {
  Dataset ds = testing::random_dataset(50, 2, 13);
  std::fill(ds.labels.begin(), ds.labels.end(), 0);
  ds.labels[0] = 1;
  EXPECT_THROW(train_shadow_attack(ds, ShadowOptions{}), ArgumentError);
  EXPECT_THROW(run_mia(fit_forest(testing::random_dataset(50, 3, 1, 0.4), ForestParams{}), AttackModel{}, ds, ds,
                       Matrix()),
               ArgumentError);
}

}  // namespace
}  // namespace leafdistill
