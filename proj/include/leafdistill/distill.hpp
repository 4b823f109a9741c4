#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "leafdistill/data.hpp"
#include "leafdistill/forest.hpp"

namespace leafdistill {

enum class Comparator { LessEqual, Greater };

struct Clause {
  std::size_t feature = 0;
  std::string feature_name;
  Comparator op = Comparator::LessEqual;
  double threshold = 0.0;

  bool holds(std::span<const double> x) const {
    return op == Comparator::LessEqual ? x[feature] <= threshold : x[feature] > threshold;
  }
  std::string to_string() const;
  friend bool operator==(const Clause&, const Clause&) = default;
};

// Root-to-leaf conjunction, merged to at most one lower and one upper bound
// per feature, in order of the feature's first appearance on the path.
struct Predicate {
  std::vector<Clause> clauses;

  bool holds(std::span<const double> x) const;
  // "x0 ≤ 0.5 AND x3 > -1.25"; the empty predicate renders as "TRUE".
  std::string to_string() const;
  friend bool operator==(const Predicate&, const Predicate&) = default;
};

// Bounding box of the training samples reaching one (tree, leaf), plus the
// rule metadata auditors read.
struct LeafRegion {
  std::size_t tree_id = 0;
  std::int32_t leaf_id = 0;
  std::vector<double> lower;
  std::vector<double> upper;
  std::size_t support = 0;
  ClassCounts class_counts{0, 0};
  Label majority_label = 0;
  double lift = 0.0;
  Predicate predicate;

  bool degenerate() const;
  bool contains(std::span<const double> x) const;
  std::string to_json_line() const;
  static LeafRegion from_json_line(const std::string& line);
  friend bool operator==(const LeafRegion&, const LeafRegion&) = default;
};

struct SyntheticSample {
  std::vector<double> x;
  Label label = 0;
  std::size_t tree_id = 0;
  std::int32_t leaf_id = 0;
  bool degenerate = false;
  std::optional<double> disagreement;
  friend bool operator==(const SyntheticSample&, const SyntheticSample&) = default;
};

Predicate leaf_predicate(const Tree& tree, std::int32_t leaf_id, const std::vector<std::string>& feature_names);

// One region per (tree, unique leaf reached by ds), ordered by tree then leaf.
// Lift is (n1 / support) / global_positive_rate; the rate defaults to ds's
// own positive rate, and lift is 0 when the rate is 0.
std::vector<LeafRegion> extract_regions(const Forest& forest, const Dataset& ds,
                                        std::optional<double> global_positive_rate = std::nullopt);

struct SynthesisOptions {
  std::uint64_t seed = 0;
  std::size_t passes = 1;
  bool drop_degenerate = false;
};

// One uniform draw per region per pass, labelled with the region's majority
// class. Region r in pass p draws from stream (seed, tree_id, leaf_id, p).
// Output is pass-major, then region order.
std::vector<SyntheticSample> synthesize(const std::vector<LeafRegion>& regions, const SynthesisOptions& options);

struct Distillation {
  Forest forest;
  std::vector<LeafRegion> regions;
  std::vector<SyntheticSample> samples;

  double ratio(std::size_t real_rows) const {
    return real_rows == 0 ? 0.0 : static_cast<double>(samples.size()) / static_cast<double>(real_rows);
  }
};

struct DistillOptions {
  ForestParams forest;
  SynthesisOptions synthesis;
  std::optional<double> global_positive_rate;
};

Distillation distill(const Dataset& ds, const DistillOptions& options);

Dataset to_dataset(const std::vector<SyntheticSample>& samples, const std::vector<std::string>& feature_names,
                   const std::string& id_prefix = "syn");

// Synthetic CSV: `__id,<features>,<label>,__tree,__leaf,__degenerate,__disagreement`.
void write_synthetic_csv(const std::string& path, const std::vector<SyntheticSample>& samples,
                         const std::vector<std::string>& feature_names, const std::string& label_column);
std::vector<SyntheticSample> read_synthetic_csv(const std::string& path, const std::vector<std::string>& feature_names,
                                                const std::string& label_column);

void write_regions_jsonl(const std::string& path, const std::vector<LeafRegion>& regions);
std::vector<LeafRegion> read_regions_jsonl(const std::string& path);

enum class RuleOrder { Lift, Support };

struct RuleRow {
  std::size_t rank = 0;
  std::size_t tree_id = 0;
  std::int32_t leaf_id = 0;
  std::size_t support = 0;
  double lift = 0.0;
  double positive_rate = 0.0;
  Label majority_label = 0;
  std::string predicate;
};

// Descending by key; ties go to larger support, then lower tree_id, then lower leaf_id.
std::vector<RuleRow> rule_summary(const std::vector<LeafRegion>& regions, std::size_t top_k, RuleOrder order);

struct Rationale {
  std::size_t tree_id = 0;
  std::int32_t leaf_id = 0;
  std::string predicate;
  Predicate structured;
  std::size_t support = 0;
  double lift = 0.0;
  bool degenerate = false;
  std::optional<double> disagreement;
};

// Throws LookupError when the sample's (tree_id, leaf_id) has no region.
Rationale explain_sample(const SyntheticSample& s, const std::vector<LeafRegion>& regions);

}  // namespace leafdistill
