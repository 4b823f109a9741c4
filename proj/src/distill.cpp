#include "leafdistill/distill.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "leafdistill/error.hpp"
#include "leafdistill/parallel.hpp"
#include "leafdistill/rng.hpp"

namespace leafdistill {

using nlohmann::json;

std::string Clause::to_string() const {
  return feature_name + (op == Comparator::LessEqual ? " ≤ " : " > ") + format_double(threshold);
}

bool Predicate::holds(std::span<const double> x) const {
  return std::all_of(clauses.begin(), clauses.end(), [&](const Clause& c) { return c.holds(x); });
}

std::string Predicate::to_string() const {
  if (clauses.empty()) return "TRUE";
  std::string s;
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    if (i) s += " AND ";
    s += clauses[i].to_string();
  }
  return s;
}

bool LeafRegion::degenerate() const {
  for (std::size_t k = 0; k < lower.size(); ++k)
    if (lower[k] == upper[k]) return true;
  return false;
}

bool LeafRegion::contains(std::span<const double> x) const {
  if (x.size() != lower.size()) return false;
  for (std::size_t k = 0; k < x.size(); ++k)
    if (x[k] < lower[k] || x[k] > upper[k]) return false;
  return true;
}

std::string LeafRegion::to_json_line() const {
  json clauses = json::array();
  for (const Clause& c : predicate.clauses) {
    clauses.push_back({{"feature", c.feature_name},
                       {"index", c.feature},
                       {"op", c.op == Comparator::LessEqual ? "<=" : ">"},
                       {"threshold", c.threshold}});
  }
  json j = {{"tree", tree_id},
            {"leaf", leaf_id},
            {"support", support},
            {"counts", {class_counts[0], class_counts[1]}},
            {"majority_label", majority_label},
            {"lift", lift},
            {"degenerate", degenerate()},
            {"lower", lower},
            {"upper", upper},
            {"predicate", clauses},
            {"rule", predicate.to_string()}};
  return j.dump();
}

LeafRegion LeafRegion::from_json_line(const std::string& line) {
  const json j = json::parse(line);
  LeafRegion r;
  r.tree_id = j.at("tree").get<std::size_t>();
  r.leaf_id = j.at("leaf").get<std::int32_t>();
  r.support = j.at("support").get<std::size_t>();
  r.class_counts = {j.at("counts").at(0).get<std::uint64_t>(), j.at("counts").at(1).get<std::uint64_t>()};
  r.majority_label = j.at("majority_label").get<Label>();
  r.lift = j.at("lift").get<double>();
  r.lower = j.at("lower").get<std::vector<double>>();
  r.upper = j.at("upper").get<std::vector<double>>();
  for (const json& c : j.at("predicate")) {
    Clause cl;
    cl.feature_name = c.at("feature").get<std::string>();
    cl.feature = c.at("index").get<std::size_t>();
    cl.op = c.at("op").get<std::string>() == "<=" ? Comparator::LessEqual : Comparator::Greater;
    cl.threshold = c.at("threshold").get<double>();
    r.predicate.clauses.push_back(std::move(cl));
  }
  return r;
}

Predicate leaf_predicate(const Tree& tree, std::int32_t leaf_id, const std::vector<std::string>& feature_names) {
  struct Bounds {
    std::optional<double> lower;  // x > lower
    std::optional<double> upper;  // x <= upper
  };
  std::vector<std::size_t> order;
  std::map<std::size_t, Bounds> bounds;
  const auto path = tree.path_to_leaf(leaf_id);
  const auto& nodes = tree.nodes();
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const TreeNode& n = nodes[path[i]];
    const auto f = static_cast<std::size_t>(n.feature);
    if (!bounds.count(f)) order.push_back(f);
    Bounds& b = bounds[f];
    if (static_cast<std::size_t>(n.left) == path[i + 1]) {
      b.upper = b.upper ? std::min(*b.upper, n.threshold) : n.threshold;
    } else {
      b.lower = b.lower ? std::max(*b.lower, n.threshold) : n.threshold;
    }
  }
  Predicate p;
  for (std::size_t f : order) {
    const Bounds& b = bounds[f];
    const std::string name = f < feature_names.size() ? feature_names[f] : "x" + std::to_string(f);
    if (b.lower) p.clauses.push_back({f, name, Comparator::Greater, *b.lower});
    if (b.upper) p.clauses.push_back({f, name, Comparator::LessEqual, *b.upper});
  }
  return p;
}

std::vector<LeafRegion> extract_regions(const Forest& forest, const Dataset& ds,
                                        std::optional<double> global_positive_rate) {
  if (ds.feature_count() != forest.feature_count()) throw ArgumentError("dataset does not match forest features");
  if (ds.size() == 0) throw ArgumentError("cannot extract regions from an empty dataset");
  const double rate = global_positive_rate.value_or(ds.positive_rate());
  const std::size_t n = ds.size();
  const std::size_t d = ds.feature_count();
  const std::vector<std::string>& names =
      forest.feature_names().size() == d ? forest.feature_names() : ds.feature_names;

  std::vector<std::vector<LeafRegion>> per_tree(forest.n_trees());
  parallel_for(forest.n_trees(), [&](std::size_t t) {
    const Tree& tree = forest.trees()[t];
    std::vector<LeafRegion> by_leaf(tree.leaf_count());
    for (std::size_t i = 0; i < n; ++i) {
      auto x = ds.features.row(i);
      const std::int32_t leaf = tree.apply(x);
      LeafRegion& r = by_leaf[static_cast<std::size_t>(leaf)];
      if (r.support == 0) {
        r.lower.assign(x.begin(), x.end());
        r.upper.assign(x.begin(), x.end());
      } else {
        for (std::size_t k = 0; k < d; ++k) {
          r.lower[k] = std::min(r.lower[k], x[k]);
          r.upper[k] = std::max(r.upper[k], x[k]);
        }
      }
      ++r.support;
      ++r.class_counts[ds.labels[i]];
    }
    std::vector<LeafRegion> kept;
    for (std::size_t leaf = 0; leaf < by_leaf.size(); ++leaf) {
      LeafRegion& r = by_leaf[leaf];
      if (r.support == 0) continue;
      r.tree_id = t;
      r.leaf_id = static_cast<std::int32_t>(leaf);
      r.majority_label = majority_class(r.class_counts);
      const double leaf_rate = static_cast<double>(r.class_counts[1]) / static_cast<double>(r.support);
      r.lift = rate > 0.0 ? leaf_rate / rate : 0.0;
      r.predicate = leaf_predicate(tree, r.leaf_id, names);
      kept.push_back(std::move(r));
    }
    per_tree[t] = std::move(kept);
  });

  std::vector<LeafRegion> regions;
  for (auto& v : per_tree)
    for (auto& r : v) regions.push_back(std::move(r));
  return regions;
}

std::vector<SyntheticSample> synthesize(const std::vector<LeafRegion>& regions, const SynthesisOptions& options) {
  if (regions.empty()) throw ArgumentError("synthesize requires at least one region");
  if (options.passes < 1) throw ArgumentError("passes must be >= 1");
  const std::size_t m = regions.size();
  std::vector<SyntheticSample> out(m * options.passes);
  parallel_for(out.size(), [&](std::size_t idx) {
    const std::size_t pass = idx / m;
    const LeafRegion& r = regions[idx % m];
    Rng rng(derive_seed(options.seed, "synthesize",
                        {r.tree_id, static_cast<std::uint64_t>(r.leaf_id), static_cast<std::uint64_t>(pass)}));
    SyntheticSample s;
    s.x.resize(r.lower.size());
    for (std::size_t k = 0; k < s.x.size(); ++k) s.x[k] = rng.uniform(r.lower[k], r.upper[k]);
    s.label = r.majority_label;
    s.tree_id = r.tree_id;
    s.leaf_id = r.leaf_id;
    s.degenerate = r.degenerate();
    out[idx] = std::move(s);
  });
  if (options.drop_degenerate)
    std::erase_if(out, [](const SyntheticSample& s) { return s.degenerate; });
  return out;
}

Distillation distill(const Dataset& ds, const DistillOptions& options) {
  Distillation out;
  out.forest = fit_forest(ds, options.forest);
  out.regions = extract_regions(out.forest, ds, options.global_positive_rate);
  out.samples = synthesize(out.regions, options.synthesis);
  return out;
}

Dataset to_dataset(const std::vector<SyntheticSample>& samples, const std::vector<std::string>& feature_names,
                   const std::string& id_prefix) {
  Dataset ds;
  ds.feature_names = feature_names;
  std::vector<double> values;
  values.reserve(samples.size() * feature_names.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SyntheticSample& s = samples[i];
    if (s.x.size() != feature_names.size()) throw ArgumentError("synthetic sample width mismatch");
    values.insert(values.end(), s.x.begin(), s.x.end());
    ds.labels.push_back(s.label);
    ds.sample_ids.push_back(id_prefix + "-" + std::to_string(i));
  }
  ds.features = Matrix(samples.size(), feature_names.size(), std::move(values));
  return ds;
}

void write_synthetic_csv(const std::string& path, const std::vector<SyntheticSample>& samples,
                         const std::vector<std::string>& feature_names, const std::string& label_column) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path);
  out << "__id";
  for (const auto& n : feature_names) out << ',' << csv_escape(n);
  out << ',' << csv_escape(label_column) << ",__tree,__leaf,__degenerate,__disagreement\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SyntheticSample& s = samples[i];
    out << "syn-" << i;
    for (double v : s.x) out << ',' << format_double(v);
    out << ',' << static_cast<int>(s.label) << ',' << s.tree_id << ',' << s.leaf_id << ','
        << (s.degenerate ? 1 : 0) << ',';
    if (s.disagreement) out << format_double(*s.disagreement);
    out << '\n';
  }
}

std::vector<SyntheticSample> read_synthetic_csv(const std::string& path, const std::vector<std::string>& feature_names,
                                                const std::string& label_column) {
  const CsvTable table = read_csv(path);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < table.header.size(); ++c) col[table.header[c]] = c;
  auto need = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw SchemaError("synthetic CSV lacks column '" + name + "'");
    return it->second;
  };
  std::vector<std::size_t> fcols;
  for (const auto& n : feature_names) fcols.push_back(need(n));
  const std::size_t lc = need(label_column), tc = need("__tree"), leafc = need("__leaf"),
                    dc = need("__degenerate"), sc = need("__disagreement");
  std::vector<SyntheticSample> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size()) throw ParseError("field count mismatch", r + 1);
    try {
      SyntheticSample s;
      for (std::size_t c : fcols) s.x.push_back(std::stod(row[c]));
      s.label = static_cast<Label>(std::stoi(row[lc]));
      s.tree_id = std::stoul(row[tc]);
      s.leaf_id = std::stoi(row[leafc]);
      s.degenerate = row[dc] == "1";
      if (!row[sc].empty()) s.disagreement = std::stod(row[sc]);
      out.push_back(std::move(s));
    } catch (const std::logic_error&) {
      throw ParseError("malformed synthetic row", r + 1);
    }
  }
  return out;
}

void write_regions_jsonl(const std::string& path, const std::vector<LeafRegion>& regions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write " + path);
  for (const LeafRegion& r : regions) out << r.to_json_line() << '\n';
}

std::vector<LeafRegion> read_regions_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open " + path);
  std::vector<LeafRegion> regions;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) regions.push_back(LeafRegion::from_json_line(line));
  return regions;
}

std::vector<RuleRow> rule_summary(const std::vector<LeafRegion>& regions, std::size_t top_k, RuleOrder order) {
  if (top_k < 1) throw ArgumentError("top_k must be >= 1");
  std::vector<const LeafRegion*> sorted;
  for (const auto& r : regions) sorted.push_back(&r);
  auto key = [order](const LeafRegion* r) {
    return order == RuleOrder::Lift ? r->lift : static_cast<double>(r->support);
  };
  std::stable_sort(sorted.begin(), sorted.end(), [&](const LeafRegion* a, const LeafRegion* b) {
    if (key(a) != key(b)) return key(a) > key(b);
    if (a->support != b->support) return a->support > b->support;
    if (a->tree_id != b->tree_id) return a->tree_id < b->tree_id;
    return a->leaf_id < b->leaf_id;
  });
  std::vector<RuleRow> rows;
  for (std::size_t i = 0; i < sorted.size() && i < top_k; ++i) {
    const LeafRegion& r = *sorted[i];
    rows.push_back({i + 1, r.tree_id, r.leaf_id, r.support, r.lift,
                    static_cast<double>(r.class_counts[1]) / static_cast<double>(r.support), r.majority_label,
                    r.predicate.to_string()});
  }
  return rows;
}

Rationale explain_sample(const SyntheticSample& s, const std::vector<LeafRegion>& regions) {
  auto it = std::find_if(regions.begin(), regions.end(), [&](const LeafRegion& r) {
    return r.tree_id == s.tree_id && r.leaf_id == s.leaf_id;
  });
  if (it == regions.end())
    throw LookupError("no region for tree " + std::to_string(s.tree_id) + " leaf " + std::to_string(s.leaf_id));
  return {it->tree_id, it->leaf_id, it->predicate.to_string(), it->predicate, it->support, it->lift,
          s.degenerate, s.disagreement};
}

}  // namespace leafdistill
