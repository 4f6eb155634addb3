// Command-line front end: dataset generation, training, evaluation,
// paradigm comparison, gradient checking, and plot emission.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "visurf/errors.hpp"
#include "visurf/harness.hpp"
#include "visurf/policy.hpp"
#include "visurf/tasks.hpp"
#include "visurf/trainer.hpp"
#include "visurf/verify.hpp"

namespace {

using namespace visurf;

nlohmann::ordered_json eval_to_json(const trainer::EvalReport& report) {
  nlohmann::ordered_json out;
  out["mean_iou"] = report.mean_iou;
  out["n_acc"] = report.n_acc;
  out["format_rate"] = report.format_rate;
  out["count"] = report.count;
  out["non_object_count"] = report.non_object_count;
  nlohmann::ordered_json families = nlohmann::ordered_json::object();
  for (const auto& [family, slice] : report.by_family) {
    nlohmann::ordered_json f;
    f["mean_iou"] = slice.mean_iou;
    f["n_acc"] = slice.n_acc;
    f["format_rate"] = slice.format_rate;
    f["count"] = slice.count;
    families[tasks::family_name(family)] = f;
  }
  out["by_family"] = families;
  return out;
}

harness::ExperimentSpec load_spec(const std::string& config_path,
                                  const std::optional<std::string>& out_dir,
                                  const std::optional<uint64_t>& seed,
                                  const std::optional<int>& steps,
                                  const std::string& only_paradigm = "") {
  harness::ExperimentSpec spec = harness::parse_spec_file(config_path);
  if (out_dir) spec.out_dir = *out_dir;
  if (seed) spec.seeds = {*seed};
  if (!only_paradigm.empty()) {
    auto it = std::find_if(spec.paradigms.begin(), spec.paradigms.end(),
                           [&](const auto& e) { return e.name == only_paradigm; });
    if (it == spec.paradigms.end())
      throw ConfigError("no paradigm named '" + only_paradigm + "' in the config");
    const harness::ParadigmEntry chosen = *it;
    spec.paradigms = {chosen};
  }
  if (steps) {
    for (auto& entry : spec.paradigms) entry.config.steps = *steps;
  }
  spec.validate();
  return spec;
}

void print_run_table(const harness::ComparisonReport& report) {
  std::printf("%-16s %-10s %-6s %10s %10s %10s\n", "paradigm", "seed", "state", "mean_iou",
              "n_acc", "held_iou");
  for (const auto& run : report.runs) {
    if (run.failed) {
      std::printf("%-16s %-10llu FAILED %s\n", run.paradigm.c_str(),
                  static_cast<unsigned long long>(run.seed), run.error.c_str());
      continue;
    }
    const auto& fin = run.final_eval();
    std::printf("%-16s %-10llu ok     %10.4f %10.4f ", run.paradigm.c_str(),
                static_cast<unsigned long long>(run.seed), fin.post.mean_iou, fin.post.n_acc);
    if (fin.held)
      std::printf("%10.4f\n", fin.held->mean_iou);
    else
      std::printf("%10s\n", "-");
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Desk-scale policy-optimization laboratory for comparing SFT, RLVR, two-stage "
               "SFT->RLVR, and unified label-injected group training"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a task dataset as JSON Lines");
  std::string gen_out = "dataset.jsonl";
  int gen_n = 400;
  double gen_fraction = 0.1;
  uint64_t gen_seed = 7;
  std::string gen_family = "post_train";
  int gen_contexts = 8, gen_items = 6;
  int64_t gen_id_offset = 0;
  gen->add_option("--out", gen_out, "Output path");
  gen->add_option("--n", gen_n, "Instance count");
  gen->add_option("--non-object-fraction", gen_fraction, "Share of empty-answer instances");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--family", gen_family, "post_train or pretrain_held");
  gen->add_option("--contexts", gen_contexts, "Context classes");
  gen->add_option("--items", gen_items, "Item tokens");
  gen->add_option("--id-offset", gen_id_offset, "First instance id");

  // train
  auto* train = app.add_subcommand("train", "Run one paradigm from an experiment config");
  std::string train_config;
  std::string train_paradigm;
  std::optional<std::string> train_out;
  std::optional<uint64_t> train_seed;
  std::optional<int> train_steps;
  train->add_option("--config", train_config, "Experiment config file")->required();
  train->add_option("--paradigm", train_paradigm,
                    "Paradigm name to run (defaults to the only one)");
  train->add_option("--out", train_out, "Output directory override");
  train->add_option("--seed", train_seed, "Run seed override");
  train->add_option("--steps", train_steps, "Step-count override");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a policy checkpoint against a dataset");
  std::string eval_checkpoint, eval_data;
  eval->add_option("--checkpoint", eval_checkpoint, "Policy checkpoint path")->required();
  eval->add_option("--data", eval_data, "Dataset JSON Lines path")->required();

  // compare
  auto* compare = app.add_subcommand("compare", "Run a full experiment spec");
  std::string compare_config;
  std::optional<std::string> compare_out;
  std::optional<uint64_t> compare_seed;
  std::optional<int> compare_steps;
  compare->add_option("--config", compare_config, "Experiment config file")->required();
  compare->add_option("--out", compare_out, "Output directory override");
  compare->add_option("--seed", compare_seed, "Replace the seed list with one seed");
  compare->add_option("--steps", compare_steps, "Step-count override for every paradigm");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Run the numerical-oracle battery");
  int gc_trials = 50;
  uint64_t gc_seed = 20240501;
  std::string gc_log = "gradcheck_trials.jsonl";
  gradcheck->add_option("--trials", gc_trials, "Trials per check");
  gradcheck->add_option("--seed", gc_seed, "Trial seed");
  gradcheck->add_option("--log", gc_log, "JSON Lines trial log path ('' disables)");

  // plot
  auto* plot = app.add_subcommand("plot", "Render curves from a persisted experiment");
  std::string plot_experiment;
  std::optional<std::string> plot_out;
  plot->add_option("--experiment", plot_experiment, "Experiment output directory")->required();
  plot->add_option("--out", plot_out, "Plot directory (default <experiment>/plots)");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    const tasks::Dataset dataset = tasks::generate_dataset(
        gen_n, gen_fraction, gen_seed, tasks::family_from_name(gen_family), gen_contexts,
        gen_items, gen_id_offset);
    tasks::save_jsonl(dataset, gen_out);
    std::printf("wrote %zu instances to %s\n", dataset.instances.size(), gen_out.c_str());
    return 0;
  }

  if (train->parsed()) {
    if (train_paradigm.empty()) {
      const harness::ExperimentSpec probe = harness::parse_spec_file(train_config);
      if (probe.paradigms.size() > 1)
        throw ConfigError("train: config has several paradigms; pick one with --paradigm");
      train_paradigm = probe.paradigms.front().name;
    }
    const harness::ExperimentSpec spec =
        load_spec(train_config, train_out, train_seed, train_steps, train_paradigm);
    const harness::ComparisonReport report = harness::run_experiment(spec);
    print_run_table(report);
    for (const auto& run : report.runs)
      if (run.failed) throw DataError("train: run failed: " + run.error);
    return 0;
  }

  if (eval->parsed()) {
    const TabularPolicy policy = TabularPolicy::load(eval_checkpoint);
    const tasks::Dataset dataset = tasks::load_jsonl(eval_data);
    const trainer::EvalReport report = trainer::evaluate(policy, dataset.instances);
    std::cout << eval_to_json(report).dump(2) << "\n";
    return 0;
  }

  if (compare->parsed()) {
    const harness::ExperimentSpec spec =
        load_spec(compare_config, compare_out, compare_seed, compare_steps);
    const harness::ComparisonReport report = harness::run_experiment(spec);
    print_run_table(report);
    std::printf("outputs under %s\n", spec.out_dir.c_str());
    return 0;
  }

  if (gradcheck->parsed()) {
    verify::GradcheckOptions options;
    options.trials = gc_trials;
    options.seed = gc_seed;
    options.log_path = gc_log;
    const verify::GradcheckReport report = verify::run_gradcheck(options, std::cout);
    if (!report.all_pass) {
      std::cerr << "error: verify: gradcheck failed\n";
      return 1;
    }
    return 0;
  }

  if (plot->parsed()) {
    const harness::ComparisonReport report = harness::load_experiment(plot_experiment);
    const std::filesystem::path out_dir =
        plot_out ? std::filesystem::path(*plot_out)
                 : std::filesystem::path(plot_experiment) / "plots";
    harness::emit_plots(report, out_dir);
    std::printf("plots under %s\n", out_dir.string().c_str());
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 5;
  }
}
