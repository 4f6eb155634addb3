#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "visurf/advantage.hpp"
#include "visurf/errors.hpp"
#include "visurf/numeric.hpp"
#include "visurf/rng.hpp"

using namespace visurf;
using namespace visurf::advantage;

namespace {

void check_normalized(const std::vector<double>& values) {
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  CHECK(std::fabs(mean) < 1e-9);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-9);
}

}  // namespace

TEST_CASE("group-relative advantages on worked examples") {
  {
    const std::vector<double> rewards{1.0, 0.0, 0.0, 0.0};
    const AdvantageSet a = advantage_grpo(rewards);
    REQUIRE_FALSE(a.degenerate);
    REQUIRE_FALSE(a.label.has_value());
    CHECK(a.rollouts[0] == doctest::Approx(1.7320508075688772).epsilon(1e-4));
    for (int j = 1; j < 4; ++j)
      CHECK(a.rollouts[j] == doctest::Approx(-0.5773502691896257).epsilon(1e-4));
    check_normalized(a.rollouts);
  }
  {
    const AdvantageSet a = advantage_grpo(std::vector<double>{0.5, 0.5, 0.5});
    CHECK(a.degenerate);
    for (double v : a.rollouts) CHECK(v == 0.0);
  }
  {
    const AdvantageSet a = advantage_grpo(std::vector<double>{1.0, 0.0});
    CHECK(a.rollouts[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.rollouts[1] == doctest::Approx(-1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(advantage_grpo(std::vector<double>{1.0}), ConfigError);
}

TEST_CASE("augmented advantages include the label as a group member") {
  {
    const std::vector<double> rollouts{0.0, 0.0, 0.0, 0.0};
    const AdvantageSet a = advantage_augmented(rollouts, 1.0);
    REQUIRE_FALSE(a.degenerate);
    REQUIRE(a.label.has_value());
    CHECK(*a.label == doctest::Approx(2.0).epsilon(1e-9));
    for (double v : a.rollouts) CHECK(v == doctest::Approx(-0.5).epsilon(1e-9));
  }
  {
    // Smoothed case: the label reward IS the rollout mean, so its advantage
    // collapses to exactly zero and the rest normalize around it.
    const std::vector<double> rollouts{1.0, 1.0, 0.0, 0.0};
    const double label = numeric::mean(rollouts);
    const AdvantageSet a = advantage_augmented(rollouts, label);
    REQUIRE_FALSE(a.degenerate);
    CHECK(*a.label == 0.0);  // bitwise
    CHECK(a.rollouts[0] == doctest::Approx(1.118033988749895).epsilon(1e-4));
    CHECK(a.rollouts[1] == doctest::Approx(1.118033988749895).epsilon(1e-4));
    CHECK(a.rollouts[2] == doctest::Approx(-1.118033988749895).epsilon(1e-4));
    CHECK(a.rollouts[3] == doctest::Approx(-1.118033988749895).epsilon(1e-4));
  }
  {
    const AdvantageSet a = advantage_augmented(std::vector<double>{0.7, 0.7}, 0.7);
    CHECK(a.degenerate);
    CHECK(*a.label == 0.0);
    for (double v : a.rollouts) CHECK(v == 0.0);
  }
  CHECK_THROWS_AS(advantage_augmented(std::vector<double>{1.0}, 0.5), ConfigError);
}

TEST_CASE("non-degenerate sets normalize to mean zero and unit deviation") {
  Rng rng(2718);
  for (int trial = 0; trial < 200; ++trial) {
    const int g = 2 + static_cast<int>(rng.next_below(7));
    std::vector<double> rewards;
    for (int j = 0; j < g; ++j) rewards.push_back(rng.next_double());
    const AdvantageSet plain = advantage_grpo(rewards);
    if (!plain.degenerate) check_normalized(plain.rollouts);

    const double label = rng.next_double();
    const AdvantageSet augmented = advantage_augmented(rewards, label);
    if (!augmented.degenerate) {
      std::vector<double> all = augmented.rollouts;
      all.push_back(*augmented.label);
      check_normalized(all);
    }
  }
}

TEST_CASE("higher reward within a group means higher advantage") {
  Rng rng(31415);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> rewards;
    for (int j = 0; j < 6; ++j)
      rewards.push_back(static_cast<double>(rng.next_below(8)) / 8.0);
    const AdvantageSet a = advantage_grpo(rewards);
    if (a.degenerate) continue;
    for (size_t i = 0; i < rewards.size(); ++i)
      for (size_t j = 0; j < rewards.size(); ++j)
        if (rewards[i] > rewards[j]) CHECK(a.rollouts[i] > a.rollouts[j]);
  }
}

TEST_CASE("advantages are bitwise invariant to dyadic shifts and power-of-two scales") {
  // Dyadic rewards with power-of-two group sizes keep every sum, mean and
  // deviation exactly representable, so invariance holds bitwise, not just
  // within a tolerance.
  Rng rng(6502);
  for (int trial = 0; trial < 100; ++trial) {
    const int g = (trial % 2 == 0) ? 4 : 8;
    std::vector<double> rewards;
    for (int j = 0; j < g; ++j)
      rewards.push_back(static_cast<double>(rng.next_below(1025)) / 1024.0);
    const double shift = (static_cast<double>(rng.next_below(1025)) - 512.0) / 256.0;
    const double scale = std::ldexp(1.0, static_cast<int>(rng.next_below(7)) - 3);

    const AdvantageSet base = advantage_grpo(rewards);
    std::vector<double> shifted = rewards, scaled = rewards;
    for (double& r : shifted) r += shift;
    for (double& r : scaled) r *= scale;
    const AdvantageSet after_shift = advantage_grpo(shifted);
    const AdvantageSet after_scale = advantage_grpo(scaled);
    CHECK(after_shift.degenerate == base.degenerate);
    CHECK(after_scale.degenerate == base.degenerate);
    for (int j = 0; j < g; ++j) {
      CHECK(after_shift.rollouts[j] == base.rollouts[j]);
      CHECK(after_scale.rollouts[j] == base.rollouts[j]);
    }

    const double label = static_cast<double>(rng.next_below(1025)) / 1024.0;
    const AdvantageSet aug = advantage_augmented(rewards, label);
    const AdvantageSet aug_shift = advantage_augmented(shifted, label + shift);
    const AdvantageSet aug_scale = advantage_augmented(scaled, label * scale);
    CHECK(aug_shift.degenerate == aug.degenerate);
    for (int j = 0; j < g; ++j) {
      CHECK(aug_shift.rollouts[j] == aug.rollouts[j]);
      CHECK(aug_scale.rollouts[j] == aug.rollouts[j]);
    }
    CHECK(*aug_shift.label == *aug.label);
    CHECK(*aug_scale.label == *aug.label);
  }
}

TEST_CASE("a label equal to the rollout mean has advantage exactly zero") {
  Rng rng(8086);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int g = 2 + static_cast<int>(rng.next_below(7));
    std::vector<double> rewards;
    for (int j = 0; j < g; ++j) rewards.push_back(rng.next_double());
    const AdvantageSet a = advantage_augmented(rewards, numeric::mean(rewards));
    if (a.degenerate) continue;
    CHECK(*a.label == 0.0);
    CHECK(std::fabs(*a.label) < 1e-12);
    ++checked;
  }
  CHECK(checked > 250);
}
