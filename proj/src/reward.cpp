#include "visurf/reward.hpp"

#include <algorithm>
#include <cmath>

#include "visurf/errors.hpp"
#include "visurf/numeric.hpp"

namespace visurf::reward {

void RewardConfig::validate() const {
  if (w_fmt < 0.0 || w_acc < 0.0) throw ConfigError("reward: weights must be nonnegative");
  if (std::fabs(w_fmt + w_acc - 1.0) > 1e-12)
    throw ConfigError("reward: weights must sum to 1");
}

double format_reward(const TokenSequence& seq) {
  const tasks::DecodeResult decoded = tasks::decode_answer(seq);
  return (decoded.format_ok && decoded.has_think) ? 1.0 : 0.0;
}

double accuracy_reward(const TokenSequence& seq, const std::vector<int>& gt_items) {
  const tasks::DecodeResult decoded = tasks::decode_answer(seq);
  if (gt_items.empty()) {
    return (decoded.items && decoded.items->empty()) ? 1.0 : 0.0;
  }
  if (!decoded.items) return 0.0;
  const std::vector<int>& pred = *decoded.items;  // sorted unique
  std::vector<int> gt = gt_items;
  std::sort(gt.begin(), gt.end());
  std::vector<int> inter, uni;
  std::set_intersection(pred.begin(), pred.end(), gt.begin(), gt.end(),
                        std::back_inserter(inter));
  std::set_union(pred.begin(), pred.end(), gt.begin(), gt.end(), std::back_inserter(uni));
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

std::vector<RewardBreakdown> score_rollouts(std::span<const TokenSequence> rollouts,
                                            const tasks::TaskInstance& task,
                                            const RewardConfig& config) {
  config.validate();
  std::vector<RewardBreakdown> out;
  out.reserve(rollouts.size());
  for (const TokenSequence& rollout : rollouts) {
    RewardBreakdown b;
    b.format_component = format_reward(rollout);
    b.accuracy_component = accuracy_reward(rollout, task.gt_items);
    b.total = config.w_fmt * b.format_component + config.w_acc * b.accuracy_component;
    out.push_back(b);
  }
  return out;
}

RewardBreakdown score_label(const TokenSequence& label_seq, const tasks::TaskInstance& task,
                            std::span<const double> rollout_totals, const RewardConfig& config) {
  config.validate();
  const tasks::DecodeResult decoded = tasks::decode_answer(label_seq);
  std::vector<int> gt = task.gt_items;
  std::sort(gt.begin(), gt.end());
  if (!decoded.items || *decoded.items != gt)
    throw DataError("reward: label sequence does not decode to the ground truth");

  RewardBreakdown b;
  b.is_label = true;
  b.format_component = config.controls.eliminate ? 0.0 : format_reward(label_seq);
  b.accuracy_component = accuracy_reward(label_seq, task.gt_items);
  b.total = config.w_fmt * b.format_component + config.w_acc * b.accuracy_component;

  if (config.controls.smooth && !rollout_totals.empty() &&
      numeric::max(rollout_totals) >= b.total) {
    b.total = numeric::mean(rollout_totals);
    b.smoothed = true;
  }
  return b;
}

}  // namespace visurf::reward
