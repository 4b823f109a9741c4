// leafdistill command-line driver.
//
//   leafdistill <stage|run|show-config> --config experiment.json [overrides]
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 stage failure. Failures
// print one JSON object {stage, error, message} on stderr.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "leafdistill/config.hpp"
#include "leafdistill/error.hpp"
#include "leafdistill/pipeline.hpp"

namespace {

using namespace leafdistill;

constexpr int kConfigExit = 2;
constexpr int kDataExit = 3;
constexpr int kStageExit = 4;

struct Overrides {
  std::string config;
  std::string output_dir;
  std::optional<std::size_t> passes;
  std::optional<std::uint64_t> seed;
  bool drop_degenerate = false;
  bool exclude_test_cluster_synthetic = false;
  std::vector<std::size_t> trees;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("-c,--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("-o,--output-dir", o.output_dir, "override output_dir");
  sub->add_option("--passes", o.passes, "synthetic sampling passes per region")->check(CLI::PositiveNumber);
  sub->add_option("--seed", o.seed, "override master_seed");
  sub->add_flag("--drop-degenerate", o.drop_degenerate, "drop samples from zero-width boxes");
  sub->add_flag("--exclude-test-cluster-synthetic", o.exclude_test_cluster_synthetic,
                "cross-eval: leave out synthetic rows distilled from the test cluster");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c = load_config(o.config);
  if (!o.output_dir.empty()) c.output_dir = std::filesystem::absolute(o.output_dir).lexically_normal();
  if (o.passes) c.passes = *o.passes;
  if (o.seed) c.master_seed = *o.seed;
  if (o.drop_degenerate) c.drop_degenerate = true;
  if (o.exclude_test_cluster_synthetic) c.exclude_test_cluster_synthetic = true;
  if (!o.trees.empty()) c.sensitivity_tree_counts = o.trees;
  return c;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kConfigExit;
  if (dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const ParseError*>(&e)) return kDataExit;
  return kStageExit;
}

void report_error(const std::string& stage, const std::exception& e) {
  const auto* err = dynamic_cast<const Error*>(&e);
  const nlohmann::json j = {{"stage", stage}, {"error", err ? err->kind() : "exception"}, {"message", e.what()}};
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree-region dataset distillation pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Overrides o;
  std::vector<std::pair<CLI::App*, std::optional<Stage>>> subs;
  for (Stage s : all_stages()) {
    CLI::App* sub = app.add_subcommand(stage_name(s), "run the " + stage_name(s) + " stage");
    add_common(sub, o);
    if (s == Stage::Sensitivity)
      sub->add_option("--trees", o.trees, "generator tree counts to sweep")->delimiter(',')->check(CLI::PositiveNumber);
    subs.emplace_back(sub, s);
  }
  CLI::App* run_all = app.add_subcommand("run", "run every stage in order");
  add_common(run_all, o);
  CLI::App* show = app.add_subcommand("show-config", "print the resolved config and its hash");
  add_common(show, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  std::string stage = "config";
  try {
    const ExperimentConfig config = resolve(o);
    if (show->parsed()) {
      std::cout << config.to_json() << "\nhash " << config.hash() << "\n";
      return 0;
    }
    stage = "lock";
    Pipeline pipeline(config);
    std::vector<Stage> todo;
    if (run_all->parsed()) {
      todo = all_stages();
    } else {
      for (const auto& [sub, s] : subs)
        if (sub->parsed()) todo.push_back(*s);
    }
    for (Stage s : todo) {
      stage = stage_name(s);
      pipeline.run(s);
      std::cout << stage << ": ok\n";
    }
    if (todo.back() == Stage::Audit) std::cout << "\n" << pipeline.audit_summary();
    if (todo.back() == Stage::Report) std::cout << "\n" << pipeline.report_summary();
    return 0;
  } catch (const std::exception& e) {
    report_error(stage, e);
    return exit_code_for(e);
  }
}
