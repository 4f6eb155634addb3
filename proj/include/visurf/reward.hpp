#pragma once

#include <span>
#include <vector>

#include "visurf/policy.hpp"
#include "visurf/tasks.hpp"

namespace visurf::reward {

/**
 * Verifiable rewards: a binary format component (well-formed think block
 * followed by a well-formed answer) and an accuracy component (set IoU
 * against the ground-truth items, exact-match rule for empty answers),
 * combined as total = w_fmt * format + w_acc * accuracy.
 *
 * Labels injected into a rollout group pass through up to three controls:
 *   eliminate — force the label's format component to zero (labels carry no
 *               reasoning trace, so they must not compete for it);
 *   smooth    — when the best rollout already matches or beats the label's
 *               provisional total, overwrite the label total with the
 *               rollout mean, which drives the label advantage to exactly
 *               zero downstream;
 *   align     — applied at serialization time (tasks::canonicalize_label),
 *               not here.
 */
struct RewardControls {
  bool align = true;
  bool eliminate = true;
  bool smooth = true;
};

struct RewardConfig {
  double w_fmt = 0.1;
  double w_acc = 0.9;
  RewardControls controls;

  void validate() const;
};

struct RewardBreakdown {
  double format_component = 0.0;    // in {0, 1}
  double accuracy_component = 0.0;  // in [0, 1]
  double total = 0.0;               // in [0, 1]
  bool is_label = false;
  bool smoothed = false;
};

/// 1 iff the sequence is fully well-formed AND carries a think block.
double format_reward(const TokenSequence& seq);

/// Empty ground truth: 1 iff the decoded prediction is the empty set.
/// Non-empty ground truth: |pred ∩ gt| / |pred ∪ gt|, with an unparseable
/// prediction scoring 0.
double accuracy_reward(const TokenSequence& seq, const std::vector<int>& gt_items);

std::vector<RewardBreakdown> score_rollouts(std::span<const TokenSequence> rollouts,
                                            const tasks::TaskInstance& task,
                                            const RewardConfig& config);

/// Label reward with eliminate/smooth applied. rollout_totals are the
/// already-computed rollout totals for the same group. Throws DataError if
/// the label does not decode to the task's ground truth.
RewardBreakdown score_label(const TokenSequence& label_seq, const tasks::TaskInstance& task,
                            std::span<const double> rollout_totals, const RewardConfig& config);

}  // namespace visurf::reward
