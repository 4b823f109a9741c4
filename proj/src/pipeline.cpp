#include "leafdistill/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "leafdistill/data.hpp"
#include "leafdistill/distill.hpp"
#include "leafdistill/forest.hpp"
#include "leafdistill/metrics.hpp"
#include "leafdistill/privacy.hpp"
#include "leafdistill/uncertainty.hpp"

namespace leafdistill {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct StageInfo {
  Stage stage;
  const char* name;
};

const StageInfo kStages[] = {
    {Stage::Ingest, "ingest"},       {Stage::Partition, "partition"}, {Stage::Distill, "distill"},
    {Stage::Filter, "filter"},       {Stage::Evaluate, "evaluate"},   {Stage::CrossEval, "cross-eval"},
    {Stage::Audit, "audit"},         {Stage::Sensitivity, "sensitivity"}, {Stage::Report, "report"},
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw StageError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw StageError("cannot write " + p.string());
  out << text;
  if (!out) throw StageError("write failed for " + p.string());
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metrics_json(const MetricsBundle& m) {
  return {{"precision", m.precision},
          {"recall", m.recall},
          {"micro_f1", m.micro_f1},
          {"auc", m.auc},
          {"precision_undefined", m.precision_undefined},
          {"auc_undefined", m.auc_undefined},
          {"n_test", m.n_test},
          {"n_pos", m.n_pos},
          {"threshold", m.threshold}};
}

ClassifierSpec classifier_spec(const ExperimentConfig& c) {
  ClassifierSpec s;
  s.kind = c.classifier;
  s.forest = c.evaluator;
  s.l2 = c.logistic_l2;
  return s;
}

std::string cluster_dir(const std::string& stage, std::size_t c) {
  return stage + "/cluster_" + std::to_string(c);
}

// Reads and writes artifacts relative to the output directory, and collects
// the list each stage declares in the manifest.
class Workspace {
 public:
  explicit Workspace(const ExperimentConfig& c) : c_(c), root_(c.output_dir) {}

  fs::path path(const std::string& rel) const { return root_ / rel; }

  fs::path require(const std::string& rel, const char* producer) const {
    const fs::path p = path(rel);
    if (!fs::exists(p))
      throw StageError("missing artifact " + rel + "; run the '" + std::string(producer) + "' stage first");
    return p;
  }

  void text(const std::string& rel, const std::string& content) {
    write_text(path(rel), content);
    written_.push_back(rel);
  }
  void json_file(const std::string& rel, const json& j) { text(rel, j.dump(2) + "\n"); }
  void dataset(const std::string& rel, const Dataset& ds) {
    fs::create_directories(path(rel).parent_path());
    write_dataset_csv(path(rel).string(), ds, c_.label_column);
    written_.push_back(rel);
  }
  void synthetic(const std::string& rel, const std::vector<SyntheticSample>& s, const std::vector<std::string>& names) {
    fs::create_directories(path(rel).parent_path());
    write_synthetic_csv(path(rel).string(), s, names, c_.label_column);
    written_.push_back(rel);
  }

  void mark(const std::string& rel) { written_.push_back(rel); }

  json read_json(const std::string& rel, const char* producer) const {
    try {
      return json::parse(read_text(require(rel, producer)));
    } catch (const json::parse_error& e) {
      throw StageError("corrupt artifact " + rel + ": " + e.what());
    }
  }

  const std::vector<std::string>& written() const noexcept { return written_; }

 private:
  const ExperimentConfig& c_;
  fs::path root_;
  std::vector<std::string> written_;
};

// ---------------------------------------------------------------------------
// Upstream artifact loaders

struct Splits {
  Dataset train, test;
};

Dataset load_dataset(const Workspace& ws, const std::string& rel, const ExperimentConfig& c) {
  IngestOptions o;
  o.label_column = c.label_column;
  o.id_column = "__id";
  return ingest_csv(ws.require(rel, "ingest").string(), o).dataset;
}

Splits load_splits(const Workspace& ws, const ExperimentConfig& c) {
  return {load_dataset(ws, "ingest/train.csv", c), load_dataset(ws, "ingest/test.csv", c)};
}

std::vector<std::size_t> load_assignment(const Workspace& ws, const std::string& rel, const Dataset& ds,
                                         std::size_t k) {
  std::istringstream in(read_text(ws.require(rel, "partition")));
  std::vector<std::size_t> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const std::size_t i = out.size();
    if (i >= ds.size() || j.at("id").get<std::string>() != ds.sample_ids[i])
      throw StageError(rel + " does not match the ingested data; rerun 'partition'");
    const auto cl = j.at("cluster").get<std::size_t>();
    if (cl >= k) throw StageError(rel + " names cluster " + std::to_string(cl) + " but k = " + std::to_string(k));
    out.push_back(cl);
  }
  if (out.size() != ds.size()) throw StageError(rel + " does not match the ingested data; rerun 'partition'");
  return out;
}

std::vector<Dataset> split_by_cluster(const Dataset& ds, const std::vector<std::size_t>& cluster_of, std::size_t k) {
  std::vector<std::vector<std::size_t>> idx(k);
  for (std::size_t i = 0; i < cluster_of.size(); ++i) idx[cluster_of[i]].push_back(i);
  std::vector<Dataset> out;
  for (std::size_t c = 0; c < k; ++c) out.push_back(ds.subset(idx[c]));
  return out;
}

struct Clustered {
  Splits splits;
  std::vector<Dataset> train, test;
};

Clustered load_clusters(const Workspace& ws, const ExperimentConfig& c) {
  Clustered out{load_splits(ws, c), {}, {}};
  const std::size_t k = c.k_clusters;
  out.train = split_by_cluster(out.splits.train,
                               load_assignment(ws, "partition/assignments.jsonl", out.splits.train, k), k);
  out.test = split_by_cluster(out.splits.test,
                              load_assignment(ws, "partition/test_assignments.jsonl", out.splits.test, k), k);
  return out;
}

std::vector<std::vector<SyntheticSample>> load_synthetic(const Workspace& ws, const ExperimentConfig& c,
                                                         const std::string& stage,
                                                         const std::vector<std::string>& names) {
  std::vector<std::vector<SyntheticSample>> out;
  for (std::size_t k = 0; k < c.k_clusters; ++k)
    out.push_back(read_synthetic_csv(
        ws.require(cluster_dir(stage, k) + "/synthetic.csv", stage.c_str()).string(), names, c.label_column));
  return out;
}

std::vector<SyntheticSample> pooled(const std::vector<std::vector<SyntheticSample>>& by_cluster) {
  std::vector<SyntheticSample> all;
  for (const auto& v : by_cluster) all.insert(all.end(), v.begin(), v.end());
  return all;
}

// ---------------------------------------------------------------------------
// Stages

void stage_ingest(const ExperimentConfig& c, Workspace& ws) {
  IngestOptions o;
  o.label_column = c.label_column;
  o.feature_columns = c.features;
  o.id_column = c.id_column;
  const IngestResult raw = ingest_csv(c.input_csv.string(), o);
  const Split split = train_test_split(raw.dataset, c.test_fraction, stage_seed(c, "split"));
  const Standardized st = standardize(split.train);
  const Dataset test = apply_standardization(split.test, st.params);

  ws.dataset("ingest/train.csv", st.dataset);
  ws.dataset("ingest/test.csv", test);
  ws.text("ingest/standardization.json", st.params.to_json() + "\n");
  ws.json_file("ingest/summary.json", {{"input_csv", c.input_csv.string()},
                                       {"rows", raw.dataset.size()},
                                       {"dropped_rows", raw.dropped_rows},
                                       {"features", raw.dataset.feature_names},
                                       {"positives", raw.dataset.positives()},
                                       {"train_rows", split.train.size()},
                                       {"train_positives", split.train.positives()},
                                       {"test_rows", split.test.size()},
                                       {"test_positives", split.test.positives()}});
}

std::size_t nearest_centroid(const Matrix& centroids, std::span<const double> x) {
  std::size_t best = 0;
  double bd = squared_distance(centroids.row(0), x);
  for (std::size_t k = 1; k < centroids.rows(); ++k) {
    const double d = squared_distance(centroids.row(k), x);
    if (d < bd) bd = d, best = k;
  }
  return best;
}

std::string assignments_jsonl(const Dataset& ds, const std::vector<std::size_t>& cluster_of) {
  std::string out;
  for (std::size_t i = 0; i < ds.size(); ++i)
    out += json({{"id", ds.sample_ids[i]}, {"cluster", cluster_of[i]}}).dump() + "\n";
  return out;
}

void stage_partition(const ExperimentConfig& c, Workspace& ws) {
  const Splits s = load_splits(ws, c);
  KMeansOptions ko;
  ko.k = c.k_clusters;
  ko.seed = stage_seed(c, "partition");
  ko.max_iters = c.kmeans_max_iters;
  ko.tol = c.kmeans_tol;
  const ClusterAssignment a = kmeans_partition(s.train.features, ko);
  std::vector<std::size_t> test_of(s.test.size());
  for (std::size_t i = 0; i < s.test.size(); ++i) test_of[i] = nearest_centroid(a.centroids, s.test.features.row(i));

  ws.text("partition/assignments.jsonl", assignments_jsonl(s.train, a.cluster_of));
  ws.text("partition/test_assignments.jsonl", assignments_jsonl(s.test, test_of));

  const auto train_parts = split_by_cluster(s.train, a.cluster_of, c.k_clusters);
  const auto test_parts = split_by_cluster(s.test, test_of, c.k_clusters);
  json clusters = json::array(), centroids = json::array();
  for (std::size_t k = 0; k < c.k_clusters; ++k) {
    const auto row = a.centroids.row(k);
    centroids.push_back(std::vector<double>(row.begin(), row.end()));
    clusters.push_back({{"cluster", k},
                        {"train_rows", train_parts[k].size()},
                        {"train_positives", train_parts[k].positives()},
                        {"test_rows", test_parts[k].size()},
                        {"test_positives", test_parts[k].positives()}});
  }
  ws.json_file("partition/centroids.json", {{"k", a.k},
                                            {"iterations", a.iterations},
                                            {"objective", a.objective_history.back()},
                                            {"centroids", centroids},
                                            {"clusters", clusters}});
}

std::string rules_csv(const std::vector<LeafRegion>& regions) {
  std::string out = "rank,tree,leaf,support,positive_rate,lift,label,rule\n";
  for (const RuleRow& r : rule_summary(regions, std::min<std::size_t>(20, regions.size()), RuleOrder::Lift)) {
    out += std::to_string(r.rank) + "," + std::to_string(r.tree_id) + "," + std::to_string(r.leaf_id) + "," +
           std::to_string(r.support) + "," + format_double(r.positive_rate) + "," + format_double(r.lift) + "," +
           std::to_string(r.majority_label) + "," + csv_escape(r.predicate) + "\n";
  }
  return out;
}

DistillOptions cluster_distill_options(const ExperimentConfig& c, std::size_t k, std::size_t n_trees) {
  DistillOptions o;
  o.forest = c.generator;
  o.forest.n_trees = n_trees;
  o.forest.seed = stage_seed(c, "distill", {k});
  o.synthesis.seed = stage_seed(c, "synthesize", {k});
  o.synthesis.passes = c.passes;
  o.synthesis.drop_degenerate = c.drop_degenerate;
  return o;
}

void stage_distill(const ExperimentConfig& c, Workspace& ws) {
  const Clustered cl = load_clusters(ws, c);
  json rows = json::array();
  std::size_t real_total = 0, syn_total = 0;
  for (std::size_t k = 0; k < c.k_clusters; ++k) {
    const Dataset& ds = cl.train[k];
    Distillation d = distill(ds, cluster_distill_options(c, k, c.generator.n_trees));
    score_samples(d.forest, d.samples);
    const std::string dir = cluster_dir("distill", k);
    ws.text(dir + "/forest.json", d.forest.to_json() + "\n");
    fs::create_directories(ws.path(dir));
    write_regions_jsonl(ws.path(dir + "/regions.jsonl").string(), d.regions);
    ws.mark(dir + "/regions.jsonl");
    ws.synthetic(dir + "/synthetic.csv", d.samples, ds.feature_names);
    ws.text(dir + "/rules.csv", rules_csv(d.regions));
    const auto degenerate = std::count_if(d.samples.begin(), d.samples.end(), [](const auto& s) { return s.degenerate; });
    rows.push_back({{"cluster", k},
                    {"real_rows", ds.size()},
                    {"regions", d.regions.size()},
                    {"synthetic_rows", d.samples.size()},
                    {"degenerate_rows", degenerate},
                    {"ratio", d.ratio(ds.size())}});
    real_total += ds.size();
    syn_total += d.samples.size();
  }
  ws.json_file("distill/ratios.json",
               {{"clusters", rows},
                {"total",
                 {{"real_rows", real_total},
                  {"synthetic_rows", syn_total},
                  {"ratio", static_cast<double>(syn_total) / static_cast<double>(real_total)}}}});
}

std::string score_histogram_csv(const std::vector<SyntheticSample>& samples) {
  std::map<double, std::array<std::size_t, 2>> counts;
  for (const auto& s : samples) ++counts[*s.disagreement][s.label];
  std::string out = "score,positive,negative\n";
  for (const auto& [score, n] : counts)
    out += format_double(score) + "," + std::to_string(n[1]) + "," + std::to_string(n[0]) + "\n";
  return out;
}

void stage_filter(const ExperimentConfig& c, Workspace& ws) {
  const Splits s = load_splits(ws, c);
  const auto& names = s.train.feature_names;
  const auto by_cluster = load_synthetic(ws, c, "distill", names);
  const auto pool = pooled(by_cluster);
  for (const auto& x : pool)
    if (!x.disagreement) throw StageError("distill/synthetic.csv lacks disagreement scores; rerun 'distill'");

  const ClassifierSpec spec = classifier_spec(c);
  const std::uint64_t seed = stage_seed(c, "filter");
  const FilterEvaluator evaluate = [&](const std::vector<SyntheticSample>& kept) {
    return train_and_evaluate(spec, seed, to_dataset(kept, names), s.test).auc;
  };

  FilterPolicy policy = c.filter.policy;
  json policy_j = {{"mode", c.filter.mode == FilterConfig::Mode::Grid ? "grid" : "fixed"}};
  if (c.filter.mode == FilterConfig::Mode::Grid) {
    const GridResult g = grid_search(pool, c.filter.candidates, evaluate);
    policy = g.best;
    json cells = json::array();
    for (const auto& cell : g.cells) {
      json j = {{"pos_pct", cell.pos_percentile}, {"neg_pct", cell.neg_percentile}, {"auc", opt(cell.auc)},
                {"kept", cell.kept}};
      if (!cell.error.empty()) j["error"] = cell.error;
      cells.push_back(j);
    }
    ws.json_file("filter/grid.json", {{"candidates", g.candidates},
                                      {"cells", cells},
                                      {"best", {{"pos_pct", g.best.pos_percentile},
                                                {"neg_pct", g.best.neg_percentile},
                                                {"auc", g.best_auc}}}});
    std::string table = "pos_pct\\neg_pct";
    for (double v : g.candidates) table += "," + format_double(v);
    table += "\n";
    for (std::size_t i = 0; i < g.candidates.size(); ++i) {
      table += format_double(g.candidates[i]);
      for (std::size_t j = 0; j < g.candidates.size(); ++j) {
        const auto& a = g.cell(i, j).auc;
        table += "," + (a ? format_double(*a) : std::string());
      }
      table += "\n";
    }
    ws.text("filter/grid.csv", table);
    policy_j["auc"] = g.best_auc;
  }

  FilterReport rep;
  const auto kept = filter_samples(pool, policy, &rep);
  if (c.filter.mode == FilterConfig::Mode::Fixed) {
    try {
      policy_j["auc"] = evaluate(kept);
    } catch (const Error& e) {
      policy_j["auc"] = nullptr;
      policy_j["auc_error"] = e.what();
    }
  }
  ws.text("filter/score_histogram.csv", score_histogram_csv(pool));
  for (std::size_t k = 0; k < c.k_clusters; ++k)
    ws.synthetic(cluster_dir("filter", k) + "/synthetic.csv", apply_thresholds(by_cluster[k], rep.thresholds), names);

  policy_j["pos_percentile"] = policy.pos_percentile;
  policy_j["neg_percentile"] = policy.neg_percentile;
  policy_j["positive_threshold"] = opt(rep.thresholds.positive);
  policy_j["negative_threshold"] = opt(rep.thresholds.negative);
  policy_j["kept_positive"] = rep.kept_positive;
  policy_j["dropped_positive"] = rep.dropped_positive;
  policy_j["kept_negative"] = rep.kept_negative;
  policy_j["dropped_negative"] = rep.dropped_negative;
  policy_j["kept"] = kept.size();
  policy_j["warnings"] = rep.warnings;
  ws.json_file("filter/policy.json", policy_j);
}

void stage_evaluate(const ExperimentConfig& c, Workspace& ws) {
  const Clustered cl = load_clusters(ws, c);
  const auto& names = cl.splits.train.feature_names;
  const auto unfiltered = load_synthetic(ws, c, "distill", names);
  const auto filtered = load_synthetic(ws, c, "filter", names);
  const ClassifierSpec spec = classifier_spec(c);

  json variants = json::array();
  // The pooled synthetic variants reuse the filter seed, so their AUCs are
  // the grid's chosen cell and its (100, 100) cell.
  auto run = [&](const std::string& name, const Dataset& train, const Dataset& test) {
    const bool pooled_synthetic = name == "combined_synthetic" || name == "combined_synthetic_unfiltered";
    const std::uint64_t seed = pooled_synthetic ? stage_seed(c, "filter") : stage_seed(c, "evaluate/" + name);
    json j = {{"name", name}, {"train_rows", train.size()}, {"test_rows", test.size()}};
    if (train.size() == 0 || test.size() == 0) {
      j["skipped"] = train.size() == 0 ? "empty training set" : "empty test set";
    } else {
      j["metrics"] = metrics_json(train_and_evaluate(spec, seed, train, test));
    }
    variants.push_back(j);
  };

  const Dataset syn_all = to_dataset(pooled(filtered), names);
  run("combined_real", cl.splits.train, cl.splits.test);
  run("combined_synthetic", syn_all, cl.splits.test);
  run("combined_synthetic_unfiltered", to_dataset(pooled(unfiltered), names), cl.splits.test);
  run("combined_real_plus_synthetic", concat(std::vector<Dataset>{cl.splits.train, syn_all}), cl.splits.test);
  for (std::size_t k = 0; k < c.k_clusters; ++k) {
    const std::string p = "cluster" + std::to_string(k);
    run(p + "_real", cl.train[k], cl.test[k]);
    run(p + "_synthetic", to_dataset(filtered[k], names), cl.test[k]);
  }
  ws.json_file("evaluate/metrics.json", {{"classifier", c.classifier}, {"variants", variants}});
}

void stage_cross_eval(const ExperimentConfig& c, Workspace& ws) {
  const Clustered cl = load_clusters(ws, c);
  const auto filtered = load_synthetic(ws, c, "filter", cl.splits.train.feature_names);
  CrossClusterOptions o;
  o.classifier = classifier_spec(c);
  o.seed = stage_seed(c, "cross_eval");
  o.exclude_test_cluster_synthetic = c.exclude_test_cluster_synthetic;
  auto results = cross_cluster_eval(cl.train, filtered, o);
  o.augment = true;
  const auto augmented = cross_cluster_eval(cl.train, filtered, o);
  results.insert(results.end(), augmented.begin(), augmented.end());

  std::string csv = "train,test,precision,recall,auc,augmented\n";
  json rows = json::array();
  for (const auto& r : results) {
    csv += std::to_string(r.train_cluster) + "," + std::to_string(r.test_cluster) + "," +
           format_double(r.metrics.precision) + "," + format_double(r.metrics.recall) + "," +
           (r.metrics.auc_undefined ? std::string() : format_double(r.metrics.auc)) + "," +
           (r.augmented ? "true" : "false") + "\n";
    rows.push_back({{"train", r.train_cluster},
                    {"test", r.test_cluster},
                    {"augmented", r.augmented},
                    {"train_rows", r.train_size},
                    {"metrics", metrics_json(r.metrics)}});
  }
  ws.text("cross_eval/cross_cluster.csv", csv);
  ws.json_file("cross_eval/cross_cluster.json",
               {{"exclude_test_cluster_synthetic", c.exclude_test_cluster_synthetic}, {"pairs", rows}});
}

Matrix features_of(const std::vector<SyntheticSample>& s, std::size_t d) {
  Matrix m(0, d);
  for (const auto& x : s) m.append_row(x.x);
  return m;
}

void stage_audit(const ExperimentConfig& c, Workspace& ws) {
  const Clustered cl = load_clusters(ws, c);
  const auto& names = cl.splits.train.feature_names;
  const std::size_t d = names.size();
  const auto filtered = load_synthetic(ws, c, "filter", names);
  const auto released = pooled(filtered);

  json similarity = json::array();
  bool ordering_ok = true;
  json ordering = json::array();
  for (std::size_t a = 0; a < c.k_clusters; ++a) {
    double own = -2.0, cross = -2.0;
    if (!filtered[a].empty() && cl.train[a].size() > 0) {
      own = nn_cosine_similarity(features_of(filtered[a], d), cl.train[a].features,
                                 "synthetic_" + std::to_string(a), "real_" + std::to_string(a))
                .mean_nn_cosine;
      similarity.push_back({{"source", "synthetic_" + std::to_string(a)},
                            {"target", "real_" + std::to_string(a)},
                            {"mean_nn_cosine", own}});
    }
    for (std::size_t b = 0; b < c.k_clusters; ++b) {
      if (a == b || cl.train[a].size() == 0 || cl.train[b].size() == 0) continue;
      const double v = nn_cosine_similarity(cl.train[a].features, cl.train[b].features, "real_" + std::to_string(a),
                                            "real_" + std::to_string(b))
                           .mean_nn_cosine;
      similarity.push_back(
          {{"source", "real_" + std::to_string(a)}, {"target", "real_" + std::to_string(b)}, {"mean_nn_cosine", v}});
      cross = std::max(cross, v);
    }
    const bool ok = own > cross;
    ordering_ok = ordering_ok && ok;
    ordering.push_back({{"cluster", a}, {"synthetic_vs_own", own}, {"max_real_vs_other", cross}, {"pass", ok}});
  }

  ForestParams tp = c.evaluator;
  tp.seed = stage_seed(c, "audit/target");
  const Forest target = fit_forest(cl.splits.train, tp);
  ws.text("audit/target_forest.json", target.to_json() + "\n");
  ShadowOptions so;
  so.shadow = c.audit.shadow;
  so.seed = stage_seed(c, "audit/shadow");
  const ShadowAttack sa = train_shadow_attack(cl.splits.train, so);
  const MIAReport mia = run_mia(target, sa.attack, cl.splits.train, cl.splits.test, features_of(released, d));

  const auto degenerate = static_cast<std::size_t>(
      std::count_if(released.begin(), released.end(), [](const auto& s) { return s.degenerate; }));
  const double degenerate_fraction =
      released.empty() ? 0.0 : static_cast<double>(degenerate) / static_cast<double>(released.size());

  json checks = json::array();
  bool pass = true;
  auto check = [&](const std::string& name, json value, json limit, bool ok) {
    checks.push_back({{"name", name}, {"value", value}, {"limit", limit}, {"pass", ok}});
    pass = pass && ok;
  };
  check("mia_holdout_auc", mia.auc_train_vs_holdout, c.audit.mia_holdout_auc_max,
        mia.auc_train_vs_holdout <= c.audit.mia_holdout_auc_max);
  check("similarity_ordering", ordering_ok, true, ordering_ok);
  if (c.audit.max_degenerate_fraction)
    check("degenerate_fraction", degenerate_fraction, *c.audit.max_degenerate_fraction,
          degenerate_fraction <= *c.audit.max_degenerate_fraction);

  const json audit = {
      {"similarity", similarity},
      {"similarity_ordering", ordering},
      {"mia",
       {{"auc_train_vs_holdout", mia.auc_train_vs_holdout},
        {"auc_train_vs_synthetic", released.empty() ? json(nullptr) : json(mia.auc_train_vs_synthetic)},
        {"mean_membership_prob_members", mia.mean_membership_prob_members},
        {"mean_membership_prob_holdout", mia.mean_membership_prob_holdout},
        {"mean_membership_prob_synthetic", mia.mean_membership_prob_synthetic},
        {"n_members", mia.n_members},
        {"n_holdout", mia.n_holdout},
        {"n_synthetic", mia.n_synthetic},
        {"attack", {{"features", sa.attack.feature_spec},
                    {"weights", sa.attack.model.weights()},
                    {"bias", sa.attack.model.bias()},
                    {"converged", sa.attack.model.converged()}}}}},
      {"degenerate", {{"released_rows", released.size()}, {"degenerate_rows", degenerate},
                      {"fraction", degenerate_fraction}}},
      {"checks", checks},
      {"pass", pass}};
  ws.json_file("audit/audit.json", audit);

  std::ostringstream sum;
  sum << "privacy audit (config " << c.hash() << ")\n\n";
  sum << "nearest-neighbour cosine similarity (mean over source rows)\n";
  for (const auto& s : similarity)
    sum << "  " << s["source"].get<std::string>() << " -> " << s["target"].get<std::string>() << ": "
        << format_double(s["mean_nn_cosine"].get<double>()) << "\n";
  sum << "\nmembership inference (" << mia.n_members << " members, " << mia.n_holdout << " holdout, "
      << mia.n_synthetic << " synthetic)\n";
  sum << "  AUC members vs holdout:   " << format_double(mia.auc_train_vs_holdout) << "\n";
  if (!released.empty()) sum << "  AUC members vs synthetic: " << format_double(mia.auc_train_vs_synthetic) << "\n";
  sum << "  mean membership prob of synthetic rows: " << format_double(mia.mean_membership_prob_synthetic) << "\n";
  sum << "\ndegenerate released rows: " << degenerate << " of " << released.size() << "\n\nchecks\n";
  for (const auto& ch : checks)
    sum << "  [" << (ch["pass"].get<bool>() ? "PASS" : "FAIL") << "] " << ch["name"].get<std::string>()
        << " = " << ch["value"].dump() << " (limit " << ch["limit"].dump() << ")\n";
  sum << "\noverall: " << (pass ? "PASS" : "FAIL") << "\n";
  ws.text("audit/summary.txt", sum.str());
}

void stage_sensitivity(const ExperimentConfig& c, Workspace& ws) {
  const Clustered cl = load_clusters(ws, c);
  const auto& names = cl.splits.train.feature_names;
  const ClassifierSpec spec = classifier_spec(c);
  std::string csv = "n_trees,real_rows,synthetic_rows,ratio,auc\n";
  for (std::size_t n : c.sensitivity_tree_counts) {
    std::vector<SyntheticSample> all;
    std::size_t real = 0;
    for (std::size_t k = 0; k < c.k_clusters; ++k) {
      const Distillation d = distill(cl.train[k], cluster_distill_options(c, k, n));
      all.insert(all.end(), d.samples.begin(), d.samples.end());
      real += cl.train[k].size();
    }
    const MetricsBundle m = train_and_evaluate(spec, stage_seed(c, "sensitivity_eval"), to_dataset(all, names),
                                               cl.splits.test);
    csv += std::to_string(n) + "," + std::to_string(real) + "," + std::to_string(all.size()) + "," +
           format_double(static_cast<double>(all.size()) / static_cast<double>(real)) + "," +
           (m.auc_undefined ? std::string() : format_double(m.auc)) + "\n";
  }
  ws.text("sensitivity/curve.csv", csv);
}

void stage_report(const ExperimentConfig& c, Workspace& ws) {
  json r = {{"tool", "leafdistill"}, {"version", kToolVersion}, {"config_hash", c.hash()}};
  r["ratios"] = ws.read_json("distill/ratios.json", "distill");
  r["filter"] = {{"policy", ws.read_json("filter/policy.json", "filter")}};
  if (fs::exists(ws.path("filter/grid.json"))) r["filter"]["grid"] = ws.read_json("filter/grid.json", "filter");
  r["metrics"] = ws.read_json("evaluate/metrics.json", "evaluate");
  r["cross_cluster"] = ws.read_json("cross_eval/cross_cluster.json", "cross-eval");
  const json audit = ws.read_json("audit/audit.json", "audit");
  r["similarity"] = audit["similarity"];
  r["mia"] = audit["mia"];
  r["audit_checks"] = audit["checks"];
  r["audit_pass"] = audit["pass"];
  if (fs::exists(ws.path("sensitivity/curve.csv")))
    r["sensitivity"] = read_text(ws.path("sensitivity/curve.csv"));
  ws.json_file("report/report.json", r);

  std::ostringstream sum;
  sum << "leafdistill " << kToolVersion << ", config " << c.hash() << "\n\ndistillation ratios\n";
  for (const auto& row : r["ratios"]["clusters"])
    sum << "  cluster " << row["cluster"].get<std::size_t>() << ": " << row["synthetic_rows"].get<std::size_t>()
        << " / " << row["real_rows"].get<std::size_t>() << " = " << format_double(row["ratio"].get<double>())
        << "\n";
  sum << "\nfilter policy: pos " << r["filter"]["policy"]["pos_percentile"].dump() << ", neg "
      << r["filter"]["policy"]["neg_percentile"].dump() << "\n\nmetrics (precision / recall / micro-F1 / AUC)\n";
  for (const auto& v : r["metrics"]["variants"]) {
    sum << "  " << v["name"].get<std::string>() << ": ";
    if (v.contains("metrics")) {
      const auto& m = v["metrics"];
      sum << format_double(m["precision"].get<double>()) << " / " << format_double(m["recall"].get<double>())
          << " / " << format_double(m["micro_f1"].get<double>()) << " / "
          << (m["auc_undefined"].get<bool>() ? std::string("undefined") : format_double(m["auc"].get<double>()));
    } else {
      sum << "skipped (" << v["skipped"].get<std::string>() << ")";
    }
    sum << "\n";
  }
  sum << "\naudit: " << (r["audit_pass"].get<bool>() ? "PASS" : "FAIL") << "\n";
  ws.text("report/summary.txt", sum.str());
}

}  // namespace

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = [] {
    std::vector<Stage> v;
    for (const auto& s : kStages) v.push_back(s.stage);
    return v;
  }();
  return stages;
}

std::string stage_name(Stage s) {
  for (const auto& info : kStages)
    if (info.stage == s) return info.name;
  throw InternalError("unknown stage");
}

std::optional<Stage> parse_stage(std::string_view name) {
  for (const auto& info : kStages)
    if (name == info.name) return info.stage;
  return std::nullopt;
}

Pipeline::Pipeline(ExperimentConfig config) : config_(std::move(config)) {
  fs::create_directories(config_.output_dir);
  lock_path_ = config_.output_dir / ".lock";
  std::FILE* f = std::fopen(lock_path_.string().c_str(), "wx");
  if (!f) {
    lock_path_.clear();
    throw StageError("output directory " + config_.output_dir.string() + " is locked by another run (remove " +
                     (config_.output_dir / ".lock").string() + " if stale)");
  }
  std::fclose(f);
}

Pipeline::~Pipeline() {
  if (!lock_path_.empty()) {
    std::error_code ec;
    fs::remove(lock_path_, ec);
  }
}

void Pipeline::run(Stage s) {
  current_ = s;
  Workspace ws(config_);
  const auto t0 = std::chrono::steady_clock::now();
  switch (s) {
    case Stage::Ingest: stage_ingest(config_, ws); break;
    case Stage::Partition: stage_partition(config_, ws); break;
    case Stage::Distill: stage_distill(config_, ws); break;
    case Stage::Filter: stage_filter(config_, ws); break;
    case Stage::Evaluate: stage_evaluate(config_, ws); break;
    case Stage::CrossEval: stage_cross_eval(config_, ws); break;
    case Stage::Audit: stage_audit(config_, ws); break;
    case Stage::Sensitivity: stage_sensitivity(config_, ws); break;
    case Stage::Report: stage_report(config_, ws); break;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  record(s, ws.written(), secs);
  current_.reset();
}

void Pipeline::run_all() {
  for (Stage s : all_stages()) run(s);
}

void Pipeline::record(Stage s, const std::vector<std::string>& artifacts, double seconds) {
  const fs::path mpath = config_.output_dir / "manifest.json";
  const std::string hash = config_.hash();
  json m;
  if (fs::exists(mpath)) {
    try {
      m = json::parse(read_text(mpath));
    } catch (const json::parse_error&) {
      m = json();
    }
    if (!m.is_object() || m.value("config_hash", "") != hash) m = json();
  }
  if (m.is_null()) {
    m = {{"tool", "leafdistill"},
         {"version", kToolVersion},
         {"config_hash", hash},
         {"config", json::parse(config_.to_json())},
         {"stages", json::object()}};
  }
  json files = json::object();
  std::vector<std::string> sorted(artifacts);
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (const auto& rel : sorted) files[rel] = hex64(hash_label(read_text(config_.output_dir / rel)));
  m["stages"][stage_name(s)] = {{"artifacts", files}};
  write_json(mpath, m);

  const fs::path tpath = config_.output_dir / "timings.json";
  json t = json::object();
  if (fs::exists(tpath)) {
    try {
      t = json::parse(read_text(tpath));
    } catch (const json::parse_error&) {
      t = json::object();
    }
  }
  t[stage_name(s)] = seconds;
  write_json(tpath, t);
}

std::string Pipeline::audit_summary() const { return read_text(config_.output_dir / "audit/summary.txt"); }
std::string Pipeline::report_summary() const { return read_text(config_.output_dir / "report/summary.txt"); }

}  // namespace leafdistill
