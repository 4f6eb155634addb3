#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "visurf/advantage.hpp"
#include "visurf/policy.hpp"
#include "visurf/reward.hpp"
#include "visurf/tasks.hpp"

namespace visurf::trainer {

/**
 * The four training paradigms over the tabular policy:
 *
 *   SFT            — gradient descent on the mean label negative
 *                    log-likelihood;
 *   RLVR           — group-relative clipped-surrogate policy optimization on
 *                    sampled rollouts;
 *   SFT_THEN_RLVR  — the two-stage pipeline, switching at stage_split;
 *   VISURF         — single-stage unification: the ground-truth label joins
 *                    the rollout group as a (G+1)-th member with its own
 *                    group-relative advantage, subject to the reward
 *                    controls (align / eliminate / smooth).
 *
 * The optimizer is plain gradient descent at a constant learning rate, so
 * analytic gradients stay directly comparable against finite differences.
 *
 * Everything is deterministic given the config seed: batches, rollouts and
 * telemetry draw from derived sub-streams keyed by (purpose, step, task id),
 * and gradient accumulation walks tasks in batch order.
 */
enum class Paradigm { kSft, kRlvr, kSftThenRlvr, kVisurf };

const char* paradigm_name(Paradigm p);
Paradigm paradigm_from_name(const std::string& name);

struct PolicyShape {
  int n_items = 6;
  int n_contexts = 8;
  int max_len = 12;
};

struct RunConfig {
  Paradigm paradigm = Paradigm::kVisurf;
  int group_size = 8;       // G
  double epsilon_clip = 0.2;
  double lr = 0.05;
  int steps = 500;
  int batch_size = 8;
  int inner_updates = 1;    // updates per rollout generation (mu)
  reward::RewardConfig reward;
  uint64_t seed = 1;
  int stage_split = -1;     // SFT steps before the two-stage switch; -1 = steps/2
  PolicyShape shape;
  int entropy_sample_budget = 16;
  bool stratify_non_object = false;
  int checkpoint_every = 0;  // 0 disables checkpointing
  std::string checkpoint_dir;

  int resolved_stage_split() const { return stage_split >= 0 ? stage_split : steps / 2; }
  void validate() const;
};

struct StepMetrics {
  int step = 0;
  double loss = 0.0;
  double mean_rollout_reward = 0.0;
  double label_reward = 0.0;
  double a_label_mean = 0.0;
  double entropy = 0.0;  // nats per token, in [0, ln V]
  double grad_norm = 0.0;
  double smoothed_fraction = 0.0;
};

/**
 * One task's sampled group, frozen against the behavior policy: rollouts,
 * their behavior log-probs, rewards, the (optional) injected label, and the
 * group-relative advantages. Everything here is independent of the policy
 * being optimized, so a prepared group can back several inner updates.
 */
struct PreparedTask {
  tasks::TaskInstance task;
  std::vector<TokenSequence> rollouts;
  std::vector<double> rollout_old_lp;
  std::vector<reward::RewardBreakdown> rollout_rewards;
  std::vector<double> rollout_totals;
  std::optional<TokenSequence> label;
  double label_old_lp = 0.0;
  reward::RewardBreakdown label_reward;
  advantage::AdvantageSet advantages;
};

std::vector<PreparedTask> prepare_groups(const TabularPolicy& old_policy,
                                         std::span<const tasks::TaskInstance> batch,
                                         const RunConfig& cfg, bool with_label,
                                         const Rng& step_rng);

// Per-term account of the clipped surrogate; term_index == group_size marks
// the label term.
struct TermRecord {
  int group_index = 0;
  int term_index = 0;
  double ratio = 1.0;
  double advantage = 0.0;
  double value = 0.0;
  double grad_coef = 0.0;  // d(term value)/d(logprob); 0 inside a clip dead-zone
};

struct SurrogateEval {
  double loss = 0.0;
  ParamTable grad;  // d loss / d theta
  std::vector<TermRecord> terms;
};

/// Batch-mean clipped surrogate loss and its exact gradient. Degenerate
/// groups (all-zero advantages) contribute nothing.
SurrogateEval eval_clipped_surrogate(const TabularPolicy& policy,
                                     std::span<const PreparedTask> groups, double epsilon_clip);

/// Applies one gradient step from prepared groups and reports metrics.
StepMetrics update_from_groups(TabularPolicy& policy, std::span<const PreparedTask> groups,
                               const RunConfig& cfg, int step_index);

// Single-step entry points (behavior policy freshly synced by the caller).
StepMetrics sft_step(TabularPolicy& policy, std::span<const tasks::TaskInstance> batch,
                     const RunConfig& cfg, int step_index);
StepMetrics rlvr_step(TabularPolicy& policy, const TabularPolicy& old_policy,
                      std::span<const tasks::TaskInstance> batch, const RunConfig& cfg,
                      int step_index);
StepMetrics visurf_step(TabularPolicy& policy, const TabularPolicy& old_policy,
                        std::span<const tasks::TaskInstance> batch, const RunConfig& cfg,
                        int step_index);

struct EvalSlice {
  double mean_iou = 0.0;
  double n_acc = 0.0;       // non-object instances answered with a well-formed empty answer
  double format_rate = 0.0; // fraction of fully well-formed outputs
  int count = 0;
  int non_object_count = 0;
};

struct EvalReport {
  double mean_iou = 0.0;
  double n_acc = 0.0;
  double format_rate = 0.0;
  int count = 0;
  int non_object_count = 0;
  std::map<tasks::TaskFamily, EvalSlice> by_family;
};

/// Greedy-decoding evaluation over a (non-empty) instance list.
EvalReport evaluate(const TabularPolicy& policy, std::span<const tasks::TaskInstance> eval_set);

using StepHook = std::function<void(const StepMetrics&, const TabularPolicy&)>;

struct TrainResult {
  TabularPolicy policy;
  std::vector<StepMetrics> metrics;
};

/// Runs the configured paradigm for cfg.steps over the training set,
/// starting from `initial` (or a fresh uniform policy). The hook fires after
/// every step with the post-update policy.
TrainResult run_training(const RunConfig& cfg, std::span<const tasks::TaskInstance> train,
                         const TabularPolicy* initial = nullptr, const StepHook& on_step = {});

}  // namespace visurf::trainer
