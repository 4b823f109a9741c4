#include "leafdistill/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "leafdistill/error.hpp"
#include "leafdistill/metrics.hpp"
#include "leafdistill/parallel.hpp"
#include "leafdistill/rng.hpp"

namespace leafdistill {

namespace {

constexpr std::size_t kSourceBlock = 128;
constexpr std::size_t kTargetBlock = 512;

Matrix normalized_rows(const Matrix& m, const std::string& name) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    double ss = 0.0;
    for (double v : r) ss += v * v;
    const double norm = std::sqrt(ss);
    if (!(norm > 0.0) || !std::isfinite(norm))
      throw ArgumentError(name + " row " + std::to_string(i) + " has zero or non-finite norm");
    for (double& v : r) v /= norm;
  }
  return out;
}

}  // namespace

SimilarityReport nn_cosine_similarity(const Matrix& source, const Matrix& target, std::string source_name,
                                      std::string target_name) {
  if (source.empty() || target.empty()) throw ArgumentError("similarity needs non-empty source and target");
  if (source.cols() != target.cols()) throw ArgumentError("similarity: feature dimensions differ");
  const Matrix s = normalized_rows(source, source_name);
  const Matrix t = normalized_rows(target, target_name);
  const std::size_t d = s.cols();

  SimilarityReport rep;
  rep.source_name = std::move(source_name);
  rep.target_name = std::move(target_name);
  rep.per_sample_max.assign(s.rows(), -2.0);
  rep.nearest.assign(s.rows(), 0);

  const std::size_t blocks = (s.rows() + kSourceBlock - 1) / kSourceBlock;
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t s0 = b * kSourceBlock, s1 = std::min(s.rows(), s0 + kSourceBlock);
    for (std::size_t t0 = 0; t0 < t.rows(); t0 += kTargetBlock) {
      const std::size_t t1 = std::min(t.rows(), t0 + kTargetBlock);
      for (std::size_t i = s0; i < s1; ++i) {
        const double* si = s.row(i).data();
        double best = rep.per_sample_max[i];
        std::size_t arg = rep.nearest[i];
        for (std::size_t j = t0; j < t1; ++j) {
          const double* tj = t.row(j).data();
          double dot = 0.0;
          for (std::size_t k = 0; k < d; ++k) dot += si[k] * tj[k];
          if (dot > best) {
            best = dot;
            arg = j;
          }
        }
        rep.per_sample_max[i] = best;
        rep.nearest[i] = arg;
      }
    }
  });
  double sum = 0.0;
  for (double& v : rep.per_sample_max) {
    v = std::clamp(v, -1.0, 1.0);
    sum += v;
  }
  rep.mean_nn_cosine = sum / static_cast<double>(rep.per_sample_max.size());
  return rep;
}

std::vector<std::string> attack_feature_names() { return {"p_class1", "max_class_prob", "entropy"}; }

Matrix attack_features(std::span<const double> probabilities) {
  Matrix f(probabilities.size(), 3);
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = probabilities[i];
    const double q = 1.0 - p;
    double h = 0.0;
    if (p > 0.0) h -= p * std::log(p);
    if (q > 0.0) h -= q * std::log(q);
    f(i, 0) = p;
    f(i, 1) = std::max(p, q);
    f(i, 2) = h;
  }
  return f;
}

std::vector<double> AttackModel::membership_probability(std::span<const double> target_probabilities) const {
  return model.predict_proba(attack_features(target_probabilities));
}

ShadowAttack train_shadow_attack(const Dataset& real_train, const ShadowOptions& options) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < real_train.size(); ++i) by_class[real_train.labels[i]].push_back(i);
  if (by_class[0].size() < 2 || by_class[1].size() < 2)
    throw ArgumentError("shadow attack needs at least two samples of each class");

  Rng rng(derive_seed(options.seed, "shadow_halves"));
  ShadowAttack out;
  for (auto& idx : by_class) {
    rng.shuffle(idx.begin(), idx.end());
    const std::size_t half = idx.size() / 2;
    out.member_indices.insert(out.member_indices.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(half));
    out.nonmember_indices.insert(out.nonmember_indices.end(), idx.begin() + static_cast<std::ptrdiff_t>(half),
                                 idx.end());
  }
  std::sort(out.member_indices.begin(), out.member_indices.end());
  std::sort(out.nonmember_indices.begin(), out.nonmember_indices.end());

  const Dataset half_a = real_train.subset(out.member_indices);
  const Dataset half_b = real_train.subset(out.nonmember_indices);
  ForestParams sp = options.shadow;
  sp.seed = derive_seed(options.seed, "shadow_forest");
  out.shadow = fit_forest(half_a, sp);

  const auto pa = out.shadow.predict_proba(half_a.features);
  const auto pb = out.shadow.predict_proba(half_b.features);
  Matrix fa = attack_features(pa), fb = attack_features(pb);
  out.attack_training_features = fa;
  for (std::size_t i = 0; i < fb.rows(); ++i) out.attack_training_features.append_row(fb.row(i));
  out.attack_training_labels.assign(fa.rows(), 1);
  out.attack_training_labels.insert(out.attack_training_labels.end(), fb.rows(), 0);

  out.attack.model.fit(out.attack_training_features, out.attack_training_labels, options.attack);
  return out;
}

MIAReport run_mia(const Forest& target, const AttackModel& attack, const Dataset& members, const Dataset& holdout,
                  const Matrix& synthetic) {
  if (members.feature_count() != target.feature_count() || holdout.feature_count() != target.feature_count() ||
      (!synthetic.empty() && synthetic.cols() != target.feature_count()))
    throw ArgumentError("MIA: feature spaces do not match the target model");
  const auto sm = attack.membership_probability(target.predict_proba(members.features));
  const auto sh = attack.membership_probability(target.predict_proba(holdout.features));
  std::vector<double> ss;
  if (!synthetic.empty()) ss = attack.membership_probability(target.predict_proba(synthetic));

  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  auto group_auc = [&](const std::vector<double>& other) {
    std::vector<double> scores = sm;
    scores.insert(scores.end(), other.begin(), other.end());
    std::vector<Label> labels(sm.size(), 1);
    labels.insert(labels.end(), other.size(), 0);
    return roc_auc(scores, labels);
  };

  MIAReport r;
  r.n_members = sm.size();
  r.n_holdout = sh.size();
  r.n_synthetic = ss.size();
  r.auc_train_vs_holdout = group_auc(sh);
  if (!ss.empty()) r.auc_train_vs_synthetic = group_auc(ss);
  r.mean_membership_prob_members = mean(sm);
  r.mean_membership_prob_holdout = mean(sh);
  r.mean_membership_prob_synthetic = mean(ss);
  return r;
}

}  // namespace leafdistill
