#include "leafdistill/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "leafdistill/error.hpp"
#include "leafdistill/rng.hpp"

namespace leafdistill {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) { throw ConfigError(path + ": " + why); }

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  const json* get(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }
  std::string at(const std::string& key) const { return path_ + "." + key; }

  void read(const std::string& key, std::string& out) {
    if (const json* v = get(key)) {
      if (!v->is_string()) fail(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void read(const std::string& key, bool& out) {
    if (const json* v = get(key)) {
      if (!v->is_boolean()) fail(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, double& out) {
    if (const json* v = get(key)) {
      if (!v->is_number()) fail(at(key), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) fail(at(key), "expected a finite number");
    }
  }
  void read(const std::string& key, std::uint64_t& out) {
    if (const json* v = get(key)) {
      if (!v->is_number_unsigned()) fail(at(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void read(const std::string& key, std::size_t& out, std::size_t min) {
    std::uint64_t u = out;
    read(key, u);
    if (u < min) fail(at(key), "must be at least " + std::to_string(min));
    out = static_cast<std::size_t>(u);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) fail(at(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

ForestParams read_forest(const json& j, const std::string& path, ForestParams p) {
  Obj o(j, path);
  o.read("n_trees", p.n_trees, 1);
  if (const json* v = o.get("max_depth")) {
    if (!v->is_number_unsigned() || v->get<std::uint64_t>() < 1) fail(o.at("max_depth"), "expected a positive integer or null");
    p.max_depth = v->get<std::size_t>();
  } else {
    p.max_depth.reset();
  }
  o.read("min_samples_leaf", p.min_samples_leaf, 1);
  o.read("features_per_split", p.features_per_split, 0);
  if (const json* v = o.get("features_fraction")) {
    if (!v->is_number()) fail(o.at("features_fraction"), "expected a number or null");
    const double f = v->get<double>();
    if (!(f > 0.0 && f <= 1.0)) fail(o.at("features_fraction"), "must lie in (0, 1]");
    p.features_fraction = f;
  } else {
    p.features_fraction.reset();
  }
  o.read("bootstrap", p.bootstrap);
  o.finish();
  return p;
}

json forest_json(const ForestParams& p) {
  return {{"n_trees", p.n_trees},
          {"max_depth", p.max_depth ? json(*p.max_depth) : json(nullptr)},
          {"min_samples_leaf", p.min_samples_leaf},
          {"features_per_split", p.features_per_split},
          {"features_fraction", p.features_fraction ? json(*p.features_fraction) : json(nullptr)},
          {"bootstrap", p.bootstrap}};
}

void check_percentile(double v, const std::string& path) {
  if (!(v >= 0.0 && v <= 100.0)) fail(path, "percentile must lie in [0, 100]");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

std::string ExperimentConfig::to_json() const {
  json filter_j;
  if (filter.mode == FilterConfig::Mode::Grid) {
    filter_j = {{"mode", "grid"}, {"candidates", filter.candidates}};
  } else {
    filter_j = {{"mode", "fixed"},
                {"pos_percentile", filter.policy.pos_percentile},
                {"neg_percentile", filter.policy.neg_percentile}};
  }
  json audit_j = {{"mia_holdout_auc_max", audit.mia_holdout_auc_max},
                  {"max_degenerate_fraction",
                   audit.max_degenerate_fraction ? json(*audit.max_degenerate_fraction) : json(nullptr)},
                  {"shadow", forest_json(audit.shadow)}};
  json j = {{"input_csv", input_csv.string()},
            {"label_column", label_column},
            {"id_column", id_column},
            {"features", features},
            {"test_fraction", test_fraction},
            {"k_clusters", k_clusters},
            {"master_seed", master_seed},
            {"kmeans", {{"max_iters", kmeans_max_iters}, {"tol", kmeans_tol}}},
            {"generator", forest_json(generator)},
            {"evaluator", forest_json(evaluator)},
            {"classifier", classifier},
            {"logistic_l2", logistic_l2},
            {"passes", passes},
            {"drop_degenerate", drop_degenerate},
            {"exclude_test_cluster_synthetic", exclude_test_cluster_synthetic},
            {"filter", filter_j},
            {"sensitivity", {{"tree_counts", sensitivity_tree_counts}}},
            {"audit", audit_j}};
  return j.dump(2);
}

std::string ExperimentConfig::hash() const {
  const std::uint64_t h = hash_label(to_json());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("$: invalid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Obj o(j, "$");

  std::string input;
  o.read("input_csv", input);
  if (input.empty()) fail("$.input_csv", "required");
  c.input_csv = resolve(base_dir, input);
  if (!std::filesystem::is_regular_file(c.input_csv)) fail("$.input_csv", "file not found: " + c.input_csv.string());

  o.read("label_column", c.label_column);
  if (c.label_column.empty()) fail("$.label_column", "must not be empty");
  o.read("id_column", c.id_column);
  if (const json* v = o.get("features")) {
    if (!v->is_array()) fail("$.features", "expected an array of strings");
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_string()) fail("$.features[" + std::to_string(i) + "]", "expected a string");
      c.features.push_back((*v)[i].get<std::string>());
    }
  }
  o.read("test_fraction", c.test_fraction);
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) fail("$.test_fraction", "must lie in (0, 1)");
  o.read("k_clusters", c.k_clusters, 2);
  o.read("master_seed", c.master_seed);
  if (const json* v = o.get("kmeans")) {
    Obj k(*v, "$.kmeans");
    k.read("max_iters", c.kmeans_max_iters, 1);
    k.read("tol", c.kmeans_tol);
    if (!(c.kmeans_tol >= 0.0)) fail("$.kmeans.tol", "must be non-negative");
    k.finish();
  }
  if (const json* v = o.get("generator")) c.generator = read_forest(*v, "$.generator", c.generator);
  if (const json* v = o.get("evaluator")) c.evaluator = read_forest(*v, "$.evaluator", c.evaluator);
  o.read("classifier", c.classifier);
  if (c.classifier != "forest" && c.classifier != "logistic") fail("$.classifier", "expected \"forest\" or \"logistic\"");
  o.read("logistic_l2", c.logistic_l2);
  if (!(c.logistic_l2 >= 0.0)) fail("$.logistic_l2", "must be non-negative");
  o.read("passes", c.passes, 1);
  o.read("drop_degenerate", c.drop_degenerate);
  o.read("exclude_test_cluster_synthetic", c.exclude_test_cluster_synthetic);

  if (const json* v = o.get("filter")) {
    Obj f(*v, "$.filter");
    std::string mode = "grid";
    f.read("mode", mode);
    if (mode == "grid") {
      c.filter.mode = FilterConfig::Mode::Grid;
      if (const json* cand = f.get("candidates")) {
        if (!cand->is_array() || cand->empty()) fail("$.filter.candidates", "expected a non-empty array of numbers");
        c.filter.candidates.clear();
        for (std::size_t i = 0; i < cand->size(); ++i) {
          const std::string p = "$.filter.candidates[" + std::to_string(i) + "]";
          if (!(*cand)[i].is_number()) fail(p, "expected a number");
          c.filter.candidates.push_back((*cand)[i].get<double>());
          check_percentile(c.filter.candidates.back(), p);
        }
      }
    } else if (mode == "fixed") {
      c.filter.mode = FilterConfig::Mode::Fixed;
      f.read("pos_percentile", c.filter.policy.pos_percentile);
      f.read("neg_percentile", c.filter.policy.neg_percentile);
      check_percentile(c.filter.policy.pos_percentile, "$.filter.pos_percentile");
      check_percentile(c.filter.policy.neg_percentile, "$.filter.neg_percentile");
    } else {
      fail("$.filter.mode", "expected \"grid\" or \"fixed\"");
    }
    f.finish();
  }

  if (const json* v = o.get("sensitivity")) {
    Obj s(*v, "$.sensitivity");
    if (const json* t = s.get("tree_counts")) {
      if (!t->is_array() || t->empty()) fail("$.sensitivity.tree_counts", "expected a non-empty array of integers");
      c.sensitivity_tree_counts.clear();
      for (std::size_t i = 0; i < t->size(); ++i) {
        if (!(*t)[i].is_number_unsigned() || (*t)[i].get<std::uint64_t>() < 1)
          fail("$.sensitivity.tree_counts[" + std::to_string(i) + "]", "expected a positive integer");
        c.sensitivity_tree_counts.push_back((*t)[i].get<std::size_t>());
      }
    }
    s.finish();
  }

  if (const json* v = o.get("audit")) {
    Obj a(*v, "$.audit");
    a.read("mia_holdout_auc_max", c.audit.mia_holdout_auc_max);
    double frac = -1.0;
    a.read("max_degenerate_fraction", frac);
    if (a.get("max_degenerate_fraction")) {
      if (!(frac >= 0.0 && frac <= 1.0)) fail("$.audit.max_degenerate_fraction", "must lie in [0, 1]");
      c.audit.max_degenerate_fraction = frac;
    }
    if (const json* sh = a.get("shadow")) c.audit.shadow = read_forest(*sh, "$.audit.shadow", c.audit.shadow);
    a.finish();
  }

  std::string out = "leafdistill-out";
  o.read("output_dir", out);
  if (out.empty()) fail("$.output_dir", "must not be empty");
  c.output_dir = resolve(base_dir, out);
  o.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("$: cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

}  // namespace leafdistill
