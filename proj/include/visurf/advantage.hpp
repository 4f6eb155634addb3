#pragma once

#include <optional>
#include <span>
#include <vector>

namespace visurf::advantage {

/**
 * Group-relative advantages: rewards centered by the group mean and scaled
 * by the population standard deviation. The augmented form treats the
 * injected label as a (G+1)-th group member with its own advantage.
 *
 * Groups whose reward spread falls below kDegenerateStd carry no signal;
 * they yield all-zero advantages, and downstream updates skip them.
 */
struct AdvantageSet {
  std::vector<double> rollouts;       // one advantage per rollout
  std::optional<double> label;        // present only for the augmented form
  bool degenerate = false;
};

inline constexpr double kDegenerateStd = 1e-8;

/// Standard group-relative advantages over G >= 2 rollout rewards.
AdvantageSet advantage_grpo(std::span<const double> rewards);

/// Advantages over the union of G rollout rewards and the label reward.
/// When label_reward equals the rollout mean bitwise (the smoothed case),
/// the label advantage is exactly zero by construction.
AdvantageSet advantage_augmented(std::span<const double> rollout_rewards, double label_reward);

}  // namespace visurf::advantage
