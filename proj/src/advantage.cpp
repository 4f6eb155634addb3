#include "visurf/advantage.hpp"

#include <cmath>

#include "visurf/errors.hpp"
#include "visurf/numeric.hpp"

namespace visurf::advantage {

namespace {

void check_group_size(size_t g) {
  if (g < 2) throw ConfigError("advantage: group statistics need at least 2 rollouts");
}

}  // namespace

AdvantageSet advantage_grpo(std::span<const double> rewards) {
  check_group_size(rewards.size());
  const double m = numeric::mean(rewards);
  double sq = 0.0;
  for (double r : rewards) sq += (r - m) * (r - m);
  const double sd = std::sqrt(sq / static_cast<double>(rewards.size()));

  AdvantageSet out;
  out.rollouts.assign(rewards.size(), 0.0);
  if (sd < kDegenerateStd) {
    out.degenerate = true;
    return out;
  }
  for (size_t j = 0; j < rewards.size(); ++j) out.rollouts[j] = (rewards[j] - m) / sd;
  return out;
}

AdvantageSet advantage_augmented(std::span<const double> rollout_rewards, double label_reward) {
  check_group_size(rollout_rewards.size());
  const auto g = static_cast<double>(rollout_rewards.size());

  // Deviations from the union mean, written against the rollout mean:
  //   r - union_mean = (r - rollout_mean) - (label - rollout_mean) / (G + 1).
  // Algebraically identical to centering on (sum + label) / (G + 1), but a
  // label that equals the rollout mean bitwise (the smoothed case) yields a
  // label deviation of exactly zero.
  const double rollout_mean = numeric::mean(rollout_rewards);
  const double shift = (label_reward - rollout_mean) / (g + 1.0);

  const double label_dev = (label_reward - rollout_mean) - shift;
  double sq = label_dev * label_dev;
  std::vector<double> devs(rollout_rewards.size());
  for (size_t j = 0; j < rollout_rewards.size(); ++j) {
    devs[j] = (rollout_rewards[j] - rollout_mean) - shift;
    sq += devs[j] * devs[j];
  }
  const double sd = std::sqrt(sq / (g + 1.0));

  AdvantageSet out;
  out.rollouts.assign(rollout_rewards.size(), 0.0);
  out.label = 0.0;
  if (sd < kDegenerateStd) {
    out.degenerate = true;
    return out;
  }
  for (size_t j = 0; j < rollout_rewards.size(); ++j) out.rollouts[j] = devs[j] / sd;
  out.label = label_dev / sd;
  return out;
}

}  // namespace visurf::advantage
