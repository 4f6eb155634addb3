#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "visurf/tasks.hpp"
#include "visurf/trainer.hpp"

namespace visurf::harness {

/**
 * Experiment orchestration: a flat, typed, sectioned key-value config format
 * describes a comparison of training paradigms over shared datasets and
 * seeds; runs persist append-only JSON Lines metrics plus CSV summaries, and
 * plots render the entropy / evaluation curves as standalone SVG files.
 *
 * Unknown config keys are hard errors. All outputs are deterministic given
 * the config: rerunning an identical spec reproduces byte-identical files.
 */

struct DatasetSection {
  int train_n = 400;
  int eval_n = 200;
  double non_object_fraction = 0.1;
  uint64_t seed = 7;
};

// Optional SFT pre-fit on the held family before the compared paradigms run.
struct PretrainSection {
  bool enabled = false;
  int steps = 400;
  double lr = 0.5;
  int batch_size = 8;
  double min_iou = 0.0;  // abort when the pre-fit evaluation falls short
  int train_n = 400;
  int eval_n = 160;
  uint64_t seed = 99;
};

struct ParadigmEntry {
  std::string name;
  trainer::RunConfig config;
};

struct ExperimentSpec {
  std::string name = "experiment";
  std::string out_dir = "runs/experiment";
  std::vector<uint64_t> seeds{1};
  int eval_every = 25;
  trainer::PolicyShape shape;
  DatasetSection dataset;
  PretrainSection pretrain;
  std::vector<ParadigmEntry> paradigms;

  void validate() const;
};

ExperimentSpec parse_spec(std::istream& in, const std::string& origin = "<config>");
ExperimentSpec parse_spec_file(const std::filesystem::path& path);

struct EvalPoint {
  int step = 0;  // optimizer updates completed when the snapshot was taken
  trainer::EvalReport post;
  std::optional<trainer::EvalReport> held;
};

struct RunRecord {
  std::string paradigm;
  uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::vector<trainer::StepMetrics> metrics;
  std::vector<EvalPoint> evals;
  std::filesystem::path dir;

  const EvalPoint& final_eval() const;
};

struct ComparisonReport {
  ExperimentSpec spec;
  double pretrain_iou = -1.0;  // < 0 when no pre-fit stage ran
  std::vector<RunRecord> runs;

  const RunRecord* find(const std::string& paradigm, uint64_t seed) const;
};

/// Runs every (paradigm, seed) pair over shared datasets, persisting under
/// spec.out_dir; failures are recorded per run and do not stop the sweep.
ComparisonReport run_experiment(const ExperimentSpec& spec);

struct ForgettingReport {
  double pretrain_iou = 0.0;
  struct Entry {
    std::string paradigm;
    uint64_t seed = 0;
    bool failed = false;
    double retention = 0.0;      // held-family mean IoU after post-training
    double post_mean_iou = 0.0;  // post-family mean IoU after post-training
  };
  std::vector<Entry> entries;

  double mean_retention(const std::string& paradigm) const;
};

/// Retention probe: pre-fits on the held family (gate at max(min_iou, 0.95))
/// and reports held-family retention per paradigm after post-training.
ForgettingReport forgetting_probe(const ExperimentSpec& spec);

/// Entropy and evaluation curves (one series per paradigm, averaged over
/// seeds) as SVG, plus lossless CSV dumps of every underlying record.
void emit_plots(const ComparisonReport& report, const std::filesystem::path& out_dir);

/// Rebuilds a report from a persisted experiment directory.
ComparisonReport load_experiment(const std::filesystem::path& dir);

// Metrics persistence (JSON Lines, one record per line).
void write_metrics_jsonl(std::span<const trainer::StepMetrics> metrics,
                         const std::filesystem::path& path);
std::vector<trainer::StepMetrics> read_metrics_jsonl(const std::filesystem::path& path);
void write_evals_jsonl(std::span<const EvalPoint> evals, const std::filesystem::path& path);
std::vector<EvalPoint> read_evals_jsonl(const std::filesystem::path& path);

}  // namespace visurf::harness
