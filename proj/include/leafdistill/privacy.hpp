#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leafdistill/data.hpp"
#include "leafdistill/distill.hpp"
#include "leafdistill/forest.hpp"
#include "leafdistill/logistic.hpp"

namespace leafdistill {

struct SimilarityReport {
  std::string source_name;
  std::string target_name;
  double mean_nn_cosine = 0.0;
  std::vector<double> per_sample_max;  // one per source row
  std::vector<std::size_t> nearest;    // index of the maximizing target row (lowest on ties)
};

// For each source row, the exact maximum cosine similarity to any target row;
// the report mean is their arithmetic mean. Computed in blocks of rows over
// pre-normalized vectors, parallel over source blocks. A zero-norm row in
// either set throws ArgumentError naming it.
SimilarityReport nn_cosine_similarity(const Matrix& source, const Matrix& target, std::string source_name = "source",
                                      std::string target_name = "target");

// [P(class=1), max class probability, prediction entropy (nats)].
std::vector<std::string> attack_feature_names();
Matrix attack_features(std::span<const double> probabilities);

struct AttackModel {
  LogisticRegression model;
  std::vector<std::string> feature_spec = attack_feature_names();

  std::vector<double> membership_probability(std::span<const double> target_probabilities) const;
};

struct ShadowAttack {
  Forest shadow;
  AttackModel attack;
  std::vector<std::size_t> member_indices;     // half A of real_train
  std::vector<std::size_t> nonmember_indices;  // half B
  Matrix attack_training_features;             // half A rows, then half B rows
  std::vector<Label> attack_training_labels;   // 1 = member
};

struct ShadowOptions {
  ForestParams shadow = ForestParams::evaluator_defaults();
  LogisticOptions attack;
  std::uint64_t seed = 0;
};

// Stratified random halves of real_train; the shadow forest trains on half A
// and the attack model learns member (A) vs non-member (B) from the shadow's
// prediction features. Throws ArgumentError if a half lacks a class.
ShadowAttack train_shadow_attack(const Dataset& real_train, const ShadowOptions& options);

struct MIAReport {
  double auc_train_vs_holdout = 0.5;
  double auc_train_vs_synthetic = 0.5;
  double mean_membership_prob_members = 0.0;
  double mean_membership_prob_holdout = 0.0;
  double mean_membership_prob_synthetic = 0.0;
  std::size_t n_members = 0;
  std::size_t n_holdout = 0;
  std::size_t n_synthetic = 0;
};

// Scores all three groups with the attack model on the target forest's
// prediction features. Member scores are labelled 1 in both AUCs.
MIAReport run_mia(const Forest& target, const AttackModel& attack, const Dataset& members, const Dataset& holdout,
                  const Matrix& synthetic);

}  // namespace leafdistill
