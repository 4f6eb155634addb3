#include "visurf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "visurf/errors.hpp"
#include "visurf/numeric.hpp"

namespace visurf::trainer {

namespace {

constexpr uint64_t kSaltBatch = 0x62617463ull;
constexpr uint64_t kSaltStep = 0x73746570ull;
constexpr uint64_t kSaltEntropy = 0x656e7472ull;

TokenSequence make_label(const tasks::TaskInstance& task, const TabularPolicy& style_policy,
                         const reward::RewardConfig& cfg) {
  if (cfg.controls.align)
    return tasks::canonicalize_label(task.gt_items, style_policy, task.context);
  return tasks::serialize_label(task.gt_items, tasks::SerializationVariant{true, true});
}

double entropy_telemetry(const TabularPolicy& policy, std::span<const tasks::TaskInstance> batch,
                         const RunConfig& cfg, int step_index) {
  std::vector<int> contexts;
  contexts.reserve(batch.size());
  for (const auto& task : batch) contexts.push_back(task.context);
  const Rng rng = Rng(cfg.seed).derive({kSaltEntropy, static_cast<uint64_t>(step_index)});
  return policy.mean_token_entropy(contexts, cfg.entropy_sample_budget, rng);
}

// Deterministic epoch-permutation batch source; optionally draws the
// dataset's non-object share of each batch from a separate pool.
class BatchSampler {
 public:
  BatchSampler(std::span<const tasks::TaskInstance> train, int batch_size, bool stratify,
               Rng rng)
      : train_(train), batch_size_(batch_size), rng_(rng) {
    if (stratify) {
      for (size_t i = 0; i < train.size(); ++i)
        (train[i].is_non_object() ? empty_pool_ : object_pool_).order.push_back(i);
      if (empty_pool_.order.empty() || object_pool_.order.empty()) {
        merge_pools();
      } else {
        const double fraction =
            static_cast<double>(empty_pool_.order.size()) / static_cast<double>(train.size());
        per_batch_empty_ = static_cast<int>(std::lround(batch_size * fraction));
        per_batch_empty_ = std::clamp(per_batch_empty_, 0, batch_size);
      }
    } else {
      for (size_t i = 0; i < train.size(); ++i) object_pool_.order.push_back(i);
    }
  }

  std::vector<tasks::TaskInstance> next() {
    std::vector<tasks::TaskInstance> batch;
    batch.reserve(batch_size_);
    for (int i = 0; i < per_batch_empty_; ++i) batch.push_back(train_[draw(empty_pool_)]);
    while (static_cast<int>(batch.size()) < batch_size_)
      batch.push_back(train_[draw(object_pool_)]);
    return batch;
  }

 private:
  struct Pool {
    std::vector<size_t> order;
    size_t cursor = 0;
    bool shuffled = false;
  };

  void merge_pools() {
    for (size_t i : empty_pool_.order) object_pool_.order.push_back(i);
    std::sort(object_pool_.order.begin(), object_pool_.order.end());
    empty_pool_.order.clear();
    per_batch_empty_ = 0;
  }

  size_t draw(Pool& pool) {
    if (!pool.shuffled || pool.cursor == pool.order.size()) {
      for (size_t i = pool.order.size(); i > 1; --i)
        std::swap(pool.order[i - 1], pool.order[rng_.next_below(i)]);
      pool.cursor = 0;
      pool.shuffled = true;
    }
    return pool.order[pool.cursor++];
  }

  std::span<const tasks::TaskInstance> train_;
  int batch_size_;
  Rng rng_;
  Pool empty_pool_;
  Pool object_pool_;
  int per_batch_empty_ = 0;
};

void check_dataset_shape(std::span<const tasks::TaskInstance> instances,
                         const PolicyShape& shape) {
  for (const auto& task : instances) {
    if (task.context < 0 || task.context >= shape.n_contexts)
      throw DataError("trainer: instance context exceeds the policy's context classes");
    for (int item : task.gt_items)
      if (item < 0 || item >= shape.n_items)
        throw DataError("trainer: instance item id exceeds the policy's item tokens");
  }
}

}  // namespace

const char* paradigm_name(Paradigm p) {
  switch (p) {
    case Paradigm::kSft: return "SFT";
    case Paradigm::kRlvr: return "RLVR";
    case Paradigm::kSftThenRlvr: return "SFT_THEN_RLVR";
    case Paradigm::kVisurf: return "VISURF";
  }
  return "?";
}

Paradigm paradigm_from_name(const std::string& name) {
  if (name == "SFT") return Paradigm::kSft;
  if (name == "RLVR") return Paradigm::kRlvr;
  if (name == "SFT_THEN_RLVR") return Paradigm::kSftThenRlvr;
  if (name == "VISURF") return Paradigm::kVisurf;
  throw ConfigError("trainer: unknown paradigm '" + name + "'");
}

void RunConfig::validate() const {
  if (epsilon_clip <= 0.0) throw ConfigError("trainer: epsilon_clip must be positive");
  if (inner_updates < 1) throw ConfigError("trainer: inner_updates must be >= 1");
  if (group_size < 2) throw ConfigError("trainer: group_size must be >= 2");
  if (batch_size < 1) throw ConfigError("trainer: batch_size must be >= 1");
  if (steps < 0) throw ConfigError("trainer: steps must be nonnegative");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("trainer: lr must be positive");
  if (shape.n_items < 4) throw ConfigError("trainer: need at least 4 item tokens");
  if (shape.n_contexts < 2) throw ConfigError("trainer: need at least 2 context classes");
  if (shape.max_len < 4) throw ConfigError("trainer: max_len too small for any answer");
  if (paradigm == Paradigm::kSftThenRlvr && steps > 0 && resolved_stage_split() >= steps)
    throw ConfigError("trainer: stage_split must be smaller than steps");
  if (checkpoint_every < 0) throw ConfigError("trainer: checkpoint_every must be nonnegative");
  if (checkpoint_every > 0 && checkpoint_dir.empty())
    throw ConfigError("trainer: checkpointing needs checkpoint_dir");
  reward.validate();
}

std::vector<PreparedTask> prepare_groups(const TabularPolicy& old_policy,
                                         std::span<const tasks::TaskInstance> batch,
                                         const RunConfig& cfg, bool with_label,
                                         const Rng& step_rng) {
  std::vector<PreparedTask> groups;
  groups.reserve(batch.size());
  for (const tasks::TaskInstance& task : batch) {
    PreparedTask group;
    group.task = task;
    const Rng task_rng = step_rng.derive({static_cast<uint64_t>(task.id)});
    group.rollouts = old_policy.sample_group(task.context, cfg.group_size, task_rng);
    group.rollout_old_lp.reserve(group.rollouts.size());
    for (const TokenSequence& rollout : group.rollouts)
      group.rollout_old_lp.push_back(old_policy.logprob(task.context, rollout));
    group.rollout_rewards = reward::score_rollouts(group.rollouts, task, cfg.reward);
    group.rollout_totals.reserve(group.rollout_rewards.size());
    for (const auto& breakdown : group.rollout_rewards)
      group.rollout_totals.push_back(breakdown.total);

    if (with_label) {
      group.label = make_label(task, old_policy, cfg.reward);
      group.label_old_lp = old_policy.logprob(task.context, *group.label);
      group.label_reward = reward::score_label(*group.label, task, group.rollout_totals,
                                               cfg.reward);
      group.advantages =
          advantage::advantage_augmented(group.rollout_totals, group.label_reward.total);
    } else {
      group.advantages = advantage::advantage_grpo(group.rollout_totals);
    }
    groups.push_back(std::move(group));
  }
  return groups;
}

SurrogateEval eval_clipped_surrogate(const TabularPolicy& policy,
                                     std::span<const PreparedTask> groups, double epsilon_clip) {
  SurrogateEval eval;
  eval.grad = ParamTable(policy.n_contexts(), policy.max_len(), policy.vocab().size());
  if (groups.empty()) return eval;

  const double batch = static_cast<double>(groups.size());
  const double lo = 1.0 - epsilon_clip;
  const double hi = 1.0 + epsilon_clip;

  for (size_t g = 0; g < groups.size(); ++g) {
    const PreparedTask& group = groups[g];
    const bool use_label = group.label.has_value();
    const int group_size = static_cast<int>(group.rollouts.size());
    const int n_terms = group_size + (use_label ? 1 : 0);
    const double scale = -1.0 / (static_cast<double>(n_terms) * batch);
    double group_value = 0.0;

    auto add_term = [&](int term_index, const TokenSequence& seq, double old_lp,
                        double advantage) {
      const double lp = policy.logprob(group.task.context, seq);
      const double ratio = std::exp(lp - old_lp);
      const double unclipped = ratio * advantage;
      const double clipped = std::clamp(ratio, lo, hi) * advantage;
      double value, dcoef;
      if (unclipped <= clipped) {
        value = unclipped;
        dcoef = ratio * advantage;
      } else {
        // The clipped branch only wins when the ratio sits outside the clip
        // interval, where clamp() is flat: the term's gradient vanishes.
        value = clipped;
        dcoef = 0.0;
      }
      group_value += value;
      const double coef = scale * dcoef;
      if (coef != 0.0) policy.accumulate_grad_logprob(group.task.context, seq, coef, eval.grad);
      eval.terms.push_back(TermRecord{static_cast<int>(g), term_index, ratio, advantage, value,
                                      dcoef});
    };

    for (int j = 0; j < group_size; ++j)
      add_term(j, group.rollouts[j], group.rollout_old_lp[j], group.advantages.rollouts[j]);
    if (use_label)
      add_term(group_size, *group.label, group.label_old_lp,
               group.advantages.label.value_or(0.0));

    eval.loss += -group_value / static_cast<double>(n_terms);
  }
  eval.loss /= batch;
  return eval;
}

StepMetrics update_from_groups(TabularPolicy& policy, std::span<const PreparedTask> groups,
                               const RunConfig& cfg, int step_index) {
  SurrogateEval eval = eval_clipped_surrogate(policy, groups, cfg.epsilon_clip);
  policy.theta().axpy(-cfg.lr, eval.grad);

  StepMetrics metrics;
  metrics.step = step_index;
  metrics.loss = eval.loss;
  metrics.grad_norm = eval.grad.l2_norm();

  int64_t rollout_count = 0;
  int64_t label_count = 0;
  int64_t smoothed = 0;
  double reward_sum = 0.0;
  double label_sum = 0.0;
  double a_label_sum = 0.0;
  std::vector<tasks::TaskInstance> batch;
  batch.reserve(groups.size());
  for (const PreparedTask& group : groups) {
    batch.push_back(group.task);
    for (double total : group.rollout_totals) {
      reward_sum += total;
      ++rollout_count;
    }
    if (group.label.has_value()) {
      label_sum += group.label_reward.total;
      a_label_sum += group.advantages.label.value_or(0.0);
      smoothed += group.label_reward.smoothed ? 1 : 0;
      ++label_count;
    }
  }
  if (rollout_count > 0)
    metrics.mean_rollout_reward = reward_sum / static_cast<double>(rollout_count);
  if (label_count > 0) {
    metrics.label_reward = label_sum / static_cast<double>(label_count);
    metrics.a_label_mean = a_label_sum / static_cast<double>(label_count);
    metrics.smoothed_fraction = static_cast<double>(smoothed) / static_cast<double>(label_count);
  }
  metrics.entropy = entropy_telemetry(policy, batch, cfg, step_index);
  return metrics;
}

StepMetrics sft_step(TabularPolicy& policy, std::span<const tasks::TaskInstance> batch,
                     const RunConfig& cfg, int step_index) {
  if (batch.empty()) throw ConfigError("trainer: empty batch");
  ParamTable grad(policy.n_contexts(), policy.max_len(), policy.vocab().size());
  const double batch_size = static_cast<double>(batch.size());
  double nll = 0.0;
  for (const tasks::TaskInstance& task : batch) {
    const TokenSequence label = make_label(task, policy, cfg.reward);
    nll += -policy.logprob(task.context, label);
    policy.accumulate_grad_logprob(task.context, label, -1.0 / batch_size, grad);
  }
  policy.theta().axpy(-cfg.lr, grad);

  StepMetrics metrics;
  metrics.step = step_index;
  metrics.loss = nll / batch_size;
  metrics.grad_norm = grad.l2_norm();
  metrics.entropy = entropy_telemetry(policy, batch, cfg, step_index);
  return metrics;
}

StepMetrics rlvr_step(TabularPolicy& policy, const TabularPolicy& old_policy,
                      std::span<const tasks::TaskInstance> batch, const RunConfig& cfg,
                      int step_index) {
  if (batch.empty()) throw ConfigError("trainer: empty batch");
  const Rng step_rng = Rng(cfg.seed).derive({kSaltStep, static_cast<uint64_t>(step_index)});
  const auto groups = prepare_groups(old_policy, batch, cfg, /*with_label=*/false, step_rng);
  return update_from_groups(policy, groups, cfg, step_index);
}

StepMetrics visurf_step(TabularPolicy& policy, const TabularPolicy& old_policy,
                        std::span<const tasks::TaskInstance> batch, const RunConfig& cfg,
                        int step_index) {
  if (batch.empty()) throw ConfigError("trainer: empty batch");
  const Rng step_rng = Rng(cfg.seed).derive({kSaltStep, static_cast<uint64_t>(step_index)});
  const auto groups = prepare_groups(old_policy, batch, cfg, /*with_label=*/true, step_rng);
  return update_from_groups(policy, groups, cfg, step_index);
}

EvalReport evaluate(const TabularPolicy& policy, std::span<const tasks::TaskInstance> eval_set) {
  if (eval_set.empty()) throw ConfigError("trainer: empty evaluation set");

  struct Tally {
    double iou_sum = 0.0;
    int64_t n_acc_hits = 0;
    int64_t format_hits = 0;
    int count = 0;
    int non_object = 0;
  };
  Tally overall;
  std::map<tasks::TaskFamily, Tally> families;

  for (const tasks::TaskInstance& task : eval_set) {
    const TokenSequence decoded_seq = policy.greedy_decode(task.context);
    const tasks::DecodeResult decoded = tasks::decode_answer(decoded_seq);
    const double iou = reward::accuracy_reward(decoded_seq, task.gt_items);
    const bool empty_answer =
        decoded.format_ok && decoded.items.has_value() && decoded.items->empty();

    for (Tally* tally : {&overall, &families[task.family]}) {
      tally->iou_sum += iou;
      tally->format_hits += decoded.format_ok ? 1 : 0;
      tally->count += 1;
      if (task.is_non_object()) {
        tally->non_object += 1;
        tally->n_acc_hits += empty_answer ? 1 : 0;
      }
    }
  }

  auto to_slice = [](const Tally& tally) {
    EvalSlice slice;
    slice.count = tally.count;
    slice.non_object_count = tally.non_object;
    slice.mean_iou = tally.iou_sum / static_cast<double>(tally.count);
    slice.format_rate = static_cast<double>(tally.format_hits) / static_cast<double>(tally.count);
    slice.n_acc = tally.non_object > 0
                      ? static_cast<double>(tally.n_acc_hits) / static_cast<double>(tally.non_object)
                      : 0.0;
    return slice;
  };

  const EvalSlice top = to_slice(overall);
  EvalReport report;
  report.mean_iou = top.mean_iou;
  report.n_acc = top.n_acc;
  report.format_rate = top.format_rate;
  report.count = top.count;
  report.non_object_count = top.non_object_count;
  for (const auto& [family, tally] : families) report.by_family[family] = to_slice(tally);
  return report;
}

TrainResult run_training(const RunConfig& cfg, std::span<const tasks::TaskInstance> train,
                         const TabularPolicy* initial, const StepHook& on_step) {
  cfg.validate();
  if (train.empty()) throw ConfigError("trainer: training set is empty");
  check_dataset_shape(train, cfg.shape);

  TabularPolicy policy = initial
                             ? *initial
                             : TabularPolicy(Vocab(cfg.shape.n_items), cfg.shape.n_contexts,
                                             cfg.shape.max_len);
  if (initial &&
      (policy.n_contexts() != cfg.shape.n_contexts || policy.max_len() != cfg.shape.max_len ||
       policy.vocab().n_items != cfg.shape.n_items))
    throw ConfigError("trainer: initial policy does not match the configured shape");

  const Rng root(cfg.seed);
  BatchSampler sampler(train, cfg.batch_size, cfg.stratify_non_object,
                       root.derive({kSaltBatch}));

  TrainResult result{policy, {}};
  result.metrics.reserve(cfg.steps);

  TabularPolicy old_policy = result.policy;
  std::vector<PreparedTask> groups;
  int rl_step_counter = 0;

  for (int step = 0; step < cfg.steps; ++step) {
    Paradigm mode = cfg.paradigm;
    if (mode == Paradigm::kSftThenRlvr)
      mode = step < cfg.resolved_stage_split() ? Paradigm::kSft : Paradigm::kRlvr;

    StepMetrics metrics;
    if (mode == Paradigm::kSft) {
      const auto batch = sampler.next();
      metrics = sft_step(result.policy, batch, cfg, step);
    } else {
      const bool with_label = mode == Paradigm::kVisurf;
      if (rl_step_counter % cfg.inner_updates == 0) {
        old_policy = result.policy;  // sync the behavior policy
        const auto batch = sampler.next();
        const Rng step_rng = root.derive({kSaltStep, static_cast<uint64_t>(step)});
        groups = prepare_groups(old_policy, batch, cfg, with_label, step_rng);
      }
      ++rl_step_counter;
      metrics = update_from_groups(result.policy, groups, cfg, step);
    }
    metrics.step = step;
    if (on_step) on_step(metrics, result.policy);
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      result.policy.save(std::filesystem::path(cfg.checkpoint_dir) /
                         ("step_" + std::to_string(step + 1) + ".policy"));
    }
    result.metrics.push_back(metrics);
  }
  return result;
}

}  // namespace visurf::trainer
