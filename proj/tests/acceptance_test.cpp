// Acceptance suite: one test case per acceptance criterion, each printing a
// single [PASS]/[FAIL] line. Criteria 6-8 run the full experiment protocols
// through the harness at desk scale.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>

#include "doctest.h"
#include "test_util.hpp"
#include "visurf/errors.hpp"
#include "visurf/harness.hpp"
#include "visurf/numeric.hpp"
#include "visurf/trainer.hpp"
#include "visurf/verify.hpp"

using namespace visurf;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void report_line(int criterion, bool pass, const char* text) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, text);
  std::fflush(stdout);
}

tasks::TaskInstance task_at(int context, std::vector<int> gt, int64_t id) {
  tasks::TaskInstance task;
  task.id = id;
  task.context = context;
  task.gt_items = std::move(gt);
  return task;
}

// Shared experiment scaffolding for the directional criteria.
harness::ExperimentSpec mixture_spec(const std::string& name,
                                     const std::filesystem::path& out_dir,
                                     std::vector<uint64_t> seeds, bool with_pretrain,
                                     double non_object_fraction, int steps,
                                     std::vector<trainer::Paradigm> paradigms) {
  harness::ExperimentSpec spec;
  spec.name = name;
  spec.out_dir = out_dir.string();
  spec.seeds = std::move(seeds);
  spec.eval_every = 100;
  spec.dataset.train_n = 400;
  spec.dataset.eval_n = 200;
  spec.dataset.non_object_fraction = non_object_fraction;
  spec.dataset.seed = 7;
  if (with_pretrain) {
    spec.pretrain.enabled = true;
    spec.pretrain.steps = 500;
    spec.pretrain.lr = 0.5;
    spec.pretrain.batch_size = 8;
    spec.pretrain.min_iou = 0.95;
    spec.pretrain.train_n = 400;
    spec.pretrain.eval_n = 160;
    spec.pretrain.seed = 99;
  }
  for (trainer::Paradigm p : paradigms) {
    harness::ParadigmEntry entry;
    entry.name = trainer::paradigm_name(p);
    entry.config.paradigm = p;
    entry.config.steps = steps;
    entry.config.lr = 0.5;
    entry.config.batch_size = 8;
    entry.config.group_size = 8;
    entry.config.epsilon_clip = 0.2;
    entry.config.entropy_sample_budget = 16;
    spec.paradigms.push_back(std::move(entry));
  }
  return spec;
}

}  // namespace

TEST_CASE("criterion 1: gradient oracle") {
  const auto start = Clock::now();
  Rng rng(101);
  const Vocab vocab(4);
  int logprob_pass = 0;
  const int logprob_trials = 50;
  for (int trial = 0; trial < logprob_trials; ++trial) {
    Rng stream = rng.derive({1, static_cast<uint64_t>(trial)});
    TabularPolicy policy(vocab, 2, 5);
    test_util::randomize(policy, stream);
    const int context = static_cast<int>(stream.next_below(2));
    const TokenSequence seq = policy.sample(context, stream);
    const ParamTable analytic = policy.grad_logprob(context, seq);
    const ParamTable numeric = verify::finite_diff_grad(
        [&](const ParamTable& theta) {
          TabularPolicy probe = policy;
          probe.theta() = theta;
          return probe.logprob(context, seq);
        },
        policy.theta(), 1e-5);
    logprob_pass += verify::compare_grads(analytic, numeric, 1e-6, 1e-9).pass ? 1 : 0;
  }

  int sft_pass = 0;
  const int sft_trials = 20;
  for (int trial = 0; trial < sft_trials; ++trial) {
    Rng stream = rng.derive({2, static_cast<uint64_t>(trial)});
    TabularPolicy policy(vocab, 2, 6);
    test_util::randomize(policy, stream);
    std::vector<std::pair<int, TokenSequence>> labels;
    for (int i = 0; i < 3; ++i) {
      std::vector<int> gt;
      for (int k = 0; k < 4 && gt.size() < 2; ++k)
        if (stream.next_below(3) == 0) gt.push_back(k);
      labels.emplace_back(static_cast<int>(stream.next_below(2)),
                          tasks::serialize_label(gt, {true, true}));
    }
    ParamTable analytic(2, 6, vocab.size());
    for (const auto& [context, label] : labels)
      policy.accumulate_grad_logprob(context, label, -1.0 / 3.0, analytic);
    const ParamTable numeric = verify::finite_diff_grad(
        [&](const ParamTable& theta) {
          TabularPolicy probe = policy;
          probe.theta() = theta;
          double nll = 0.0;
          for (const auto& [context, label] : labels) nll += -probe.logprob(context, label);
          return nll / 3.0;
        },
        policy.theta(), 1e-5);
    sft_pass += verify::compare_grads(analytic, numeric, 1e-6, 1e-9).pass ? 1 : 0;
  }

  const double elapsed = seconds_since(start);
  const bool pass =
      logprob_pass == logprob_trials && sft_pass == sft_trials && elapsed < 30.0;
  char text[160];
  std::snprintf(text, sizeof(text),
                "gradient oracle: %d/%d logprob, %d/%d sft-loss trials within 1e-6 (%.2fs)",
                logprob_pass, logprob_trials, sft_pass, sft_trials, elapsed);
  report_line(1, pass, text);
  CHECK(logprob_pass == logprob_trials);
  CHECK(sft_pass == sft_trials);
  CHECK(elapsed < 30.0);
}

TEST_CASE("criterion 2: decomposition identity") {
  const auto start = Clock::now();
  Rng rng(202);
  int passed = 0;
  int total = 0;
  double worst = 0.0;
  for (const int group_size : {2, 4, 8}) {
    for (int trial = 0; trial < 17; ++trial) {
      Rng stream = rng.derive({static_cast<uint64_t>(group_size), static_cast<uint64_t>(trial)});
      trainer::RunConfig cfg;
      cfg.shape = trainer::PolicyShape{6, 8, 12};
      cfg.group_size = group_size;
      TabularPolicy policy(Vocab(6), 8, 12);
      test_util::randomize(policy, stream, 0.8);
      std::vector<tasks::TaskInstance> batch;
      for (int i = 0; i < 3; ++i) {
        const int context = static_cast<int>(stream.next_below(8));
        batch.push_back(task_at(
            context, tasks::context_gt(tasks::TaskFamily::kPostTrain, context, 8, 6),
            trial * 10 + i));
      }
      const verify::DecompositionReport report =
          verify::check_decomposition(policy, batch, cfg, stream.next_u64());
      worst = std::max(worst, report.max_abs_err);
      passed += report.pass ? 1 : 0;
      ++total;
    }
  }
  const double elapsed = seconds_since(start);
  const bool pass = passed == total && elapsed < 60.0;
  char text[160];
  std::snprintf(text, sizeof(text),
                "decomposition identity: %d/%d trials, max err %.2e, G in {2,4,8} (%.2fs)",
                passed, total, worst, elapsed);
  report_line(2, pass, text);
  CHECK(passed == total);
  CHECK(worst < 1e-9);
  CHECK(elapsed < 60.0);
}

TEST_CASE("criterion 3: advantage normalization") {
  bool pass = true;
  {  // frozen worked examples
    const auto a = advantage::advantage_grpo(std::vector<double>{1.0, 0.0, 0.0, 0.0});
    pass &= std::fabs(a.rollouts[0] - 1.7320508075688772) < 1e-4;
    pass &= std::fabs(a.rollouts[1] + 0.5773502691896257) < 1e-4;
    const auto two = advantage::advantage_grpo(std::vector<double>{1.0, 0.0});
    pass &= std::fabs(two.rollouts[0] - 1.0) < 1e-12 && std::fabs(two.rollouts[1] + 1.0) < 1e-12;
    const auto aug = advantage::advantage_augmented(std::vector<double>{0, 0, 0, 0}, 1.0);
    pass &= std::fabs(*aug.label - 2.0) < 1e-9;
    for (double v : aug.rollouts) pass &= std::fabs(v + 0.5) < 1e-9;
    const auto smoothed =
        advantage::advantage_augmented(std::vector<double>{1.0, 1.0, 0.0, 0.0}, 0.5);
    pass &= *smoothed.label == 0.0;
    pass &= std::fabs(smoothed.rollouts[0] - 1.118033988749895) < 1e-4;
    const auto flat = advantage::advantage_grpo(std::vector<double>{0.5, 0.5, 0.5});
    pass &= flat.degenerate;
  }
  {  // normalization and monotonicity over random groups
    Rng rng(303);
    for (int trial = 0; trial < 200; ++trial) {
      const int g = 2 + static_cast<int>(rng.next_below(7));
      std::vector<double> rewards;
      for (int j = 0; j < g; ++j) rewards.push_back(rng.next_double());
      const auto plain = advantage::advantage_grpo(rewards);
      const auto augmented = advantage::advantage_augmented(rewards, rng.next_double());
      auto check_set = [&](const std::vector<double>& values) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(values.size());
        pass &= std::fabs(mean) < 1e-9 && std::fabs(std::sqrt(var) - 1.0) < 1e-9;
      };
      if (!plain.degenerate) {
        check_set(plain.rollouts);
        for (size_t i = 0; i < rewards.size(); ++i)
          for (size_t j = 0; j < rewards.size(); ++j)
            if (rewards[i] > rewards[j]) pass &= plain.rollouts[i] > plain.rollouts[j];
      }
      if (!augmented.degenerate) {
        std::vector<double> all = augmented.rollouts;
        all.push_back(*augmented.label);
        check_set(all);
      }
    }
  }
  {  // exact shift/scale invariance on dyadic rewards, power-of-two groups
    Rng rng(304);
    for (int trial = 0; trial < 100; ++trial) {
      const int g = trial % 2 == 0 ? 4 : 8;
      std::vector<double> rewards;
      for (int j = 0; j < g; ++j)
        rewards.push_back(static_cast<double>(rng.next_below(1025)) / 1024.0);
      const double label = static_cast<double>(rng.next_below(1025)) / 1024.0;
      const double shift = (static_cast<double>(rng.next_below(1025)) - 512.0) / 256.0;
      const double scale = std::ldexp(1.0, static_cast<int>(rng.next_below(7)) - 3);
      std::vector<double> shifted = rewards, scaled = rewards;
      for (double& r : shifted) r += shift;
      for (double& r : scaled) r *= scale;
      const auto base = advantage::advantage_grpo(rewards);
      const auto sh = advantage::advantage_grpo(shifted);
      const auto sc = advantage::advantage_grpo(scaled);
      const auto base_aug = advantage::advantage_augmented(rewards, label);
      const auto sh_aug = advantage::advantage_augmented(shifted, label + shift);
      const auto sc_aug = advantage::advantage_augmented(scaled, label * scale);
      for (int j = 0; j < g; ++j) {
        pass &= sh.rollouts[j] == base.rollouts[j] && sc.rollouts[j] == base.rollouts[j];
        pass &= sh_aug.rollouts[j] == base_aug.rollouts[j] &&
                sc_aug.rollouts[j] == base_aug.rollouts[j];
      }
      pass &= *sh_aug.label == *base_aug.label && *sc_aug.label == *base_aug.label;
    }
  }
  report_line(3, pass,
              "advantage normalization: worked examples at 1e-4, mean/std at 1e-9, exact "
              "shift/scale invariance");
  CHECK(pass);
}

TEST_CASE("criterion 4: smoothing guarantee") {
  Rng rng(404);
  reward::RewardConfig cfg;
  const auto task = task_at(1, {1, 3}, 0);
  const TokenSequence label_seq = tasks::serialize_label(task.gt_items, {true, true});
  TabularPolicy old_policy(Vocab(6), 8, 12);
  TabularPolicy off_sync = old_policy;
  Rng perturb = rng.derive({9});
  for (double& v : off_sync.theta().data()) v += 0.4 * (2.0 * perturb.next_double() - 1.0);

  int smoothed_seen = 0;
  bool pass = true;
  for (int trial = 0; trial < 200; ++trial) {
    Rng stream = rng.derive({static_cast<uint64_t>(trial)});
    std::vector<double> totals;
    const int g = 4 + static_cast<int>(stream.next_below(5));
    for (int j = 0; j < g; ++j)
      totals.push_back(static_cast<double>(stream.next_below(11)) / 10.0);
    const reward::RewardBreakdown scored = reward::score_label(label_seq, task, totals, cfg);
    const double provisional = cfg.w_acc * 1.0;  // labels carry no think block
    if (numeric::max(totals) < provisional) {
      pass &= !scored.smoothed;
      continue;
    }
    ++smoothed_seen;
    pass &= scored.smoothed;
    const auto advantages = advantage::advantage_augmented(totals, scored.total);
    pass &= std::fabs(*advantages.label) < 1e-12;

    // The label term contributes exactly nothing to the gradient, at sync
    // and off sync alike.
    trainer::PreparedTask group;
    group.task = task;
    for (int j = 0; j < g; ++j)
      group.rollouts.push_back(TokenSequence{{Vocab::item(j % 6), Vocab::kEos}, true});
    for (const TokenSequence& seq : group.rollouts)
      group.rollout_old_lp.push_back(old_policy.logprob(task.context, seq));
    group.rollout_totals = totals;
    group.label = label_seq;
    group.label_old_lp = old_policy.logprob(task.context, label_seq);
    group.label_reward = scored;
    group.advantages = advantages;

    trainer::PreparedTask without = group;
    without.label.reset();
    without.advantages.label.reset();

    for (const TabularPolicy* policy : {&old_policy, &off_sync}) {
      const auto with_label =
          trainer::eval_clipped_surrogate(*policy, std::span(&group, 1), 0.2);
      // Renormalize the label-free gradient from 1/G to 1/(G+1) weighting.
      const auto label_free =
          trainer::eval_clipped_surrogate(*policy, std::span(&without, 1), 0.2);
      ParamTable rescaled(policy->n_contexts(), policy->max_len(), policy->vocab().size());
      rescaled.axpy(static_cast<double>(g) / static_cast<double>(g + 1), label_free.grad);
      pass &= with_label.grad.max_abs_diff(rescaled) < 1e-15;
      pass &= with_label.terms.back().grad_coef == 0.0;
      pass &= with_label.terms.back().value == 0.0;
    }
  }
  pass &= smoothed_seen > 100;
  char text[160];
  std::snprintf(text, sizeof(text),
                "smoothing guarantee: %d smoothed groups, |A_label| < 1e-12, zero label "
                "gradient contribution",
                smoothed_seen);
  report_line(4, pass, text);
  CHECK(pass);
}

TEST_CASE("criterion 5: surrogate correctness") {
  Rng rng(505);
  trainer::RunConfig cfg;
  cfg.shape = trainer::PolicyShape{6, 8, 12};
  cfg.group_size = 4;
  int matched = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    Rng stream = rng.derive({static_cast<uint64_t>(trial)});
    TabularPolicy old_policy(Vocab(6), 8, 12);
    test_util::randomize(old_policy, stream, 0.8);
    const int context = static_cast<int>(stream.next_below(8));
    const auto task = task_at(
        context, tasks::context_gt(tasks::TaskFamily::kPostTrain, context, 8, 6), trial);
    cfg.seed = stream.next_u64();
    const Rng step_rng = Rng(cfg.seed).derive({0xacc5ull});
    const auto groups = trainer::prepare_groups(old_policy, std::span(&task, 1), cfg,
                                                /*with_label=*/true, step_rng);

    TabularPolicy policy = old_policy;
    for (double& v : policy.theta().data()) v += 0.6 * (2.0 * stream.next_double() - 1.0);

    const auto eval = trainer::eval_clipped_surrogate(policy, groups, cfg.epsilon_clip);
    std::vector<double> advantages = groups[0].advantages.rollouts;
    advantages.push_back(groups[0].advantages.label.value_or(0.0));
    const double oracle = verify::brute_force_surrogate(policy, old_policy, groups[0],
                                                        advantages, cfg.epsilon_clip);
    if (std::fabs(eval.loss - oracle) < 1e-9) ++matched;
  }

  // Clip dead-zones in both sign regimes.
  TabularPolicy flat(Vocab(4), 1, 4);
  trainer::PreparedTask group;
  group.task = task_at(0, {}, 0);
  group.rollouts = {TokenSequence{{Vocab::item(0)}, false},
                    TokenSequence{{Vocab::item(1)}, false}};
  for (const auto& seq : group.rollouts)
    group.rollout_old_lp.push_back(flat.logprob(0, seq));
  group.rollout_totals = {1.0, 0.0};
  group.advantages.rollouts = {1.0, -1.0};
  group.advantages.degenerate = false;
  TabularPolicy pushed = flat;
  pushed.logit(0, 0, TabularPolicy::kStart, Vocab::item(0)) = 3.0;
  const auto dead = trainer::eval_clipped_surrogate(pushed, std::span(&group, 1), 0.2);
  const bool dead_zones = dead.terms[0].ratio > 1.4 && dead.terms[1].ratio < 0.6 &&
                          dead.terms[0].grad_coef == 0.0 && dead.terms[1].grad_coef == 0.0 &&
                          dead.grad.max_abs() == 0.0;

  const bool pass = matched == trials && dead_zones;
  char text[160];
  std::snprintf(text, sizeof(text),
                "surrogate correctness: %d/%d off-sync configs within 1e-9, dead zones in "
                "both signs",
                matched, trials);
  report_line(5, pass, text);
  CHECK(matched == trials);
  CHECK(dead_zones);
}

TEST_CASE("criterion 6: non-object reproduction") {
  const auto start = Clock::now();
  const auto dir = test_util::scratch_dir("acceptance_c6");
  std::vector<uint64_t> seeds;
  for (uint64_t s = 101; s <= 110; ++s) seeds.push_back(s);
  const harness::ExperimentSpec spec =
      mixture_spec("nonobject", dir, seeds, /*with_pretrain=*/true, 0.1, 700,
                   {trainer::Paradigm::kRlvr, trainer::Paradigm::kVisurf});
  const harness::ComparisonReport report = harness::run_experiment(spec);

  int rlvr_low = 0, visurf_high = 0;
  std::printf("    per-seed n_acc:  seed    RLVR  VISURF\n");
  for (uint64_t seed : seeds) {
    const harness::RunRecord* rlvr = report.find("RLVR", seed);
    const harness::RunRecord* vis = report.find("VISURF", seed);
    REQUIRE(rlvr != nullptr);
    REQUIRE(vis != nullptr);
    REQUIRE_FALSE(rlvr->failed);
    REQUIRE_FALSE(vis->failed);
    const double rlvr_nacc = rlvr->final_eval().post.n_acc;
    const double vis_nacc = vis->final_eval().post.n_acc;
    rlvr_low += rlvr_nacc < 0.05 ? 1 : 0;
    visurf_high += vis_nacc > 0.8 ? 1 : 0;
    std::printf("                     %llu  %6.3f  %6.3f\n",
                static_cast<unsigned long long>(seed), rlvr_nacc, vis_nacc);
  }
  const double elapsed = seconds_since(start);
  const bool pass = rlvr_low >= 9 && visurf_high >= 9 && elapsed < 600.0;
  char text[200];
  std::snprintf(text, sizeof(text),
                "non-object reproduction: RLVR n_acc<0.05 in %d/10 seeds, VISURF n_acc>0.8 "
                "in %d/10 seeds, 700 steps (%.1fs)",
                rlvr_low, visurf_high, elapsed);
  report_line(6, pass, text);
  CHECK(rlvr_low >= 9);
  CHECK(visurf_high >= 9);
  CHECK(elapsed < 600.0);
}

TEST_CASE("criterion 7: entropy dynamics") {
  const auto dir = test_util::scratch_dir("acceptance_c7");
  std::vector<uint64_t> seeds;
  for (uint64_t s = 201; s <= 205; ++s) seeds.push_back(s);
  harness::ExperimentSpec spec = mixture_spec(
      "entropy", dir, seeds, /*with_pretrain=*/false, 0.1, 600,
      {trainer::Paradigm::kRlvr, trainer::Paradigm::kSftThenRlvr, trainer::Paradigm::kVisurf});
  const harness::ComparisonReport report = harness::run_experiment(spec);

  std::map<std::string, double> early_drop, final_entropy;
  for (const auto& run : report.runs) {
    REQUIRE_FALSE(run.failed);
    REQUIRE(run.metrics.size() == 600);
    early_drop[run.paradigm] += (run.metrics[0].entropy - run.metrics[59].entropy) / 5.0;
    final_entropy[run.paradigm] += run.metrics[599].entropy / 5.0;
  }
  const bool drop_ok = early_drop["VISURF"] > early_drop["RLVR"];
  const bool final_ok = final_entropy["VISURF"] > final_entropy["SFT_THEN_RLVR"];
  const bool pass = drop_ok && final_ok;
  char text[220];
  std::snprintf(text, sizeof(text),
                "entropy dynamics: first-10%% drop VISURF %.3f vs RLVR %.3f; final entropy "
                "VISURF %.3f vs SFT->RLVR %.3f (5-seed means)",
                early_drop["VISURF"], early_drop["RLVR"], final_entropy["VISURF"],
                final_entropy["SFT_THEN_RLVR"]);
  report_line(7, pass, text);
  CHECK(drop_ok);
  CHECK(final_ok);
}

TEST_CASE("criterion 8: forgetting probe") {
  const auto dir = test_util::scratch_dir("acceptance_c8");
  std::vector<uint64_t> seeds;
  for (uint64_t s = 301; s <= 305; ++s) seeds.push_back(s);
  harness::ExperimentSpec spec = mixture_spec(
      "forgetting", dir, seeds, /*with_pretrain=*/true, 0.0, 150,
      {trainer::Paradigm::kSft, trainer::Paradigm::kRlvr, trainer::Paradigm::kVisurf});
  const harness::ForgettingReport probe = harness::forgetting_probe(spec);

  std::map<std::pair<std::string, uint64_t>, double> retention;
  for (const auto& entry : probe.entries) {
    REQUIRE_FALSE(entry.failed);
    retention[{entry.paradigm, entry.seed}] = entry.retention;
  }
  int sft_below = 0;
  for (uint64_t seed : seeds)
    if (retention[{"SFT", seed}] < retention[{"VISURF", seed}]) ++sft_below;
  const double gap =
      std::fabs(probe.mean_retention("VISURF") - probe.mean_retention("RLVR"));
  const bool pass = sft_below >= 4 && gap < 0.05 && probe.pretrain_iou >= 0.95;
  char text[220];
  std::snprintf(text, sizeof(text),
                "forgetting probe: pre-fit IoU %.3f; SFT<VISURF retention in %d/5 seeds "
                "(SFT %.3f, VISURF %.3f, RLVR %.3f); |VISURF-RLVR| = %.4f",
                probe.pretrain_iou, sft_below, probe.mean_retention("SFT"),
                probe.mean_retention("VISURF"), probe.mean_retention("RLVR"), gap);
  report_line(8, pass, text);
  CHECK(sft_below >= 4);
  CHECK(gap < 0.05);
}

TEST_CASE("criterion 9: determinism") {
  const auto dir = test_util::scratch_dir("acceptance_c9");
  auto spec_a = mixture_spec("repro", dir / "a", {77}, /*with_pretrain=*/false, 0.1, 40,
                             {trainer::Paradigm::kRlvr, trainer::Paradigm::kVisurf});
  auto spec_b = spec_a;
  spec_b.out_dir = (dir / "b").string();
  harness::run_experiment(spec_a);
  harness::run_experiment(spec_b);

  bool pass = true;
  for (const std::string rel :
       {"post_train.jsonl", "post_eval.jsonl", "summary.csv", "RLVR/seed_77/metrics.jsonl",
        "RLVR/seed_77/evals.jsonl", "VISURF/seed_77/metrics.jsonl",
        "VISURF/seed_77/evals.jsonl", "VISURF/seed_77/final.policy"}) {
    const std::string a = test_util::read_file(dir / "a" / rel);
    const std::string b = test_util::read_file(dir / "b" / rel);
    pass &= !a.empty() && a == b;
  }
  report_line(9, pass, "determinism: repeated runs produce byte-identical metrics files");
  CHECK(pass);
}

TEST_CASE("criterion 10: degenerate-group safety") {
  bool pass = true;
  trainer::RunConfig cfg;
  cfg.shape = trainer::PolicyShape{6, 8, 12};
  cfg.group_size = 8;
  cfg.lr = 0.5;
  cfg.seed = 1;
  cfg.entropy_sample_budget = 8;

  {  // every rollout scores zero: the group carries no signal
    cfg.paradigm = trainer::Paradigm::kRlvr;
    TabularPolicy policy(Vocab(6), 8, 12);
    for (int p = 0; p < 12; ++p)
      for (int prev = 0; prev <= policy.vocab().size(); ++prev)
        policy.theta().at(0, p, prev, Vocab::item(0)) = 40.0;
    const TabularPolicy old_policy = policy;
    const ParamTable before = policy.theta();
    const std::vector<tasks::TaskInstance> batch{task_at(0, {}, 0), task_at(0, {}, 1)};
    const trainer::StepMetrics metrics = trainer::rlvr_step(policy, old_policy, batch, cfg, 0);
    pass &= policy.theta() == before;
    pass &= metrics.grad_norm == 0.0 && metrics.loss == 0.0;
    pass &= std::isfinite(metrics.entropy) && std::isfinite(metrics.mean_rollout_reward);
    pass &= policy.theta().all_finite();
  }
  {  // every rollout ties the label: smoothing degenerates the whole union
    cfg.paradigm = trainer::Paradigm::kVisurf;
    TabularPolicy policy(Vocab(6), 8, 12);
    const int context = 2;
    const auto gt = tasks::context_gt(tasks::TaskFamily::kPostTrain, context, 8, 6);
    const TokenSequence label = tasks::serialize_label(gt, {true, true});
    int prev = TabularPolicy::kStart;
    for (int p = 0; p < label.length(); ++p) {
      policy.logit(context, p, prev, label.ids[p]) = 40.0;
      prev = label.ids[p];
    }
    const TabularPolicy old_policy = policy;
    const ParamTable before = policy.theta();
    const std::vector<tasks::TaskInstance> batch{task_at(context, gt, 3)};
    const trainer::StepMetrics metrics =
        trainer::visurf_step(policy, old_policy, batch, cfg, 0);
    pass &= policy.theta() == before;
    pass &= metrics.grad_norm == 0.0 && metrics.loss == 0.0;
    pass &= metrics.smoothed_fraction == 1.0;
    pass &= std::isfinite(metrics.a_label_mean) && metrics.a_label_mean == 0.0;
    pass &= policy.theta().all_finite();
  }
  report_line(10, pass,
              "degenerate-group safety: all-equal rewards leave parameters bitwise unchanged "
              "and every metric finite");
  CHECK(pass);
}
