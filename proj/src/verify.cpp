#include "visurf/verify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "json.hpp"
#include "visurf/errors.hpp"
#include "visurf/rng.hpp"

namespace visurf::verify {

namespace {

double probe(const std::function<double(const ParamTable&)>& f, ParamTable& theta, size_t coord,
             double value) {
  const double saved = theta.data()[coord];
  theta.data()[coord] = value;
  const double out = f(theta);
  theta.data()[coord] = saved;
  if (!std::isfinite(out)) throw DataError("verify: non-finite function value in oracle");
  return out;
}

}  // namespace

ParamTable finite_diff_grad(const std::function<double(const ParamTable&)>& f,
                            const ParamTable& theta, double h) {
  if (!(h > 0.0)) throw ConfigError("verify: finite-difference step must be positive");
  ParamTable work = theta;
  ParamTable grad = theta;
  grad.fill(0.0);
  for (size_t i = 0; i < work.size(); ++i) {
    const double x = work.data()[i];
    const double fp = probe(f, work, i, x + h);
    const double fm = probe(f, work, i, x - h);
    grad.data()[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

std::vector<double> finite_diff_grad_at(const std::function<double(const ParamTable&)>& f,
                                        const ParamTable& theta,
                                        std::span<const size_t> coords, double h) {
  if (!(h > 0.0)) throw ConfigError("verify: finite-difference step must be positive");
  ParamTable work = theta;
  std::vector<double> out;
  out.reserve(coords.size());
  for (size_t coord : coords) {
    const double x = work.data()[coord];
    const double fp = probe(f, work, coord, x + h);
    const double fm = probe(f, work, coord, x - h);
    out.push_back((fp - fm) / (2.0 * h));
  }
  return out;
}

GradCompare compare_grads(const ParamTable& analytic, const ParamTable& numeric, double rel_tol,
                          double abs_floor) {
  GradCompare result;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i];
    const double b = numeric.data()[i];
    const double err = std::fabs(a - b);
    const double allowed = std::max(rel_tol * std::max(std::fabs(a), std::fabs(b)), abs_floor);
    const double rel = err / std::max({std::fabs(a), std::fabs(b), abs_floor});
    if (rel > result.max_rel_err) {
      result.max_rel_err = rel;
      result.worst_coord = i;
    }
    if (err > allowed) result.pass = false;
  }
  return result;
}

double brute_force_surrogate(const TabularPolicy& policy, const TabularPolicy& old_policy,
                             const trainer::PreparedTask& group,
                             std::span<const double> advantages, double epsilon_clip) {
  const bool use_label = group.label.has_value();
  const size_t n_terms = group.rollouts.size() + (use_label ? 1 : 0);
  if (advantages.size() != n_terms)
    throw ConfigError("verify: advantage count does not match the group");

  const int context = group.task.context;
  double sum = 0.0;
  for (size_t t = 0; t < n_terms; ++t) {
    const TokenSequence& seq =
        (use_label && t == group.rollouts.size()) ? *group.label : group.rollouts[t];
    const double ratio =
        std::exp(policy.logprob(context, seq) - old_policy.logprob(context, seq));
    const double unclipped = ratio * advantages[t];
    const double clipped =
        std::clamp(ratio, 1.0 - epsilon_clip, 1.0 + epsilon_clip) * advantages[t];
    sum += std::min(unclipped, clipped);
  }
  return -sum / static_cast<double>(n_terms);
}

ParamTable assemble_gradient(const TabularPolicy& policy,
                             std::span<const WeightedSequence> terms, double scale) {
  ParamTable acc(policy.n_contexts(), policy.max_len(), policy.vocab().size());
  for (const WeightedSequence& term : terms) {
    const double coef = scale * term.coef;
    if (coef != 0.0) policy.accumulate_grad_logprob(term.context, *term.seq, coef, acc);
  }
  return acc;
}

DecompositionReport check_decomposition(const TabularPolicy& policy,
                                        std::span<const tasks::TaskInstance> batch,
                                        const trainer::RunConfig& cfg, uint64_t seed) {
  const TabularPolicy old_policy = policy;  // synced by construction
  const Rng step_rng = Rng(seed).derive({0x64636d70ull});
  const auto groups =
      trainer::prepare_groups(old_policy, batch, cfg, /*with_label=*/true, step_rng);

  const trainer::SurrogateEval implemented =
      trainer::eval_clipped_surrogate(policy, groups, cfg.epsilon_clip);

  // Independent assembly of the two gradient terms from raw advantages.
  const double batch_size = static_cast<double>(groups.size());
  std::vector<WeightedSequence> rollout_terms;
  std::vector<WeightedSequence> label_terms;
  for (const trainer::PreparedTask& group : groups) {
    const double n_terms = static_cast<double>(group.rollouts.size()) + 1.0;
    const double scale = -1.0 / (n_terms * batch_size);
    for (size_t j = 0; j < group.rollouts.size(); ++j)
      rollout_terms.push_back(WeightedSequence{group.task.context, &group.rollouts[j],
                                               scale * group.advantages.rollouts[j]});
    label_terms.push_back(WeightedSequence{group.task.context, &*group.label,
                                           scale * group.advantages.label.value_or(0.0)});
  }
  ParamTable rlvr_term = assemble_gradient(policy, rollout_terms, 1.0);
  const ParamTable sft_term = assemble_gradient(policy, label_terms, 1.0);
  rlvr_term.axpy(1.0, sft_term);

  DecompositionReport report;
  report.max_abs_err = implemented.grad.max_abs_diff(rlvr_term);
  report.sft_term_max_abs = sft_term.max_abs();
  report.pass = report.max_abs_err < 1e-9;
  return report;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options, std::ostream& out) {
  GradcheckReport report;
  Rng rng(options.seed);
  std::ofstream log;
  if (!options.log_path.empty()) {
    log.open(options.log_path);
    if (!log) throw IoError("verify: cannot open trial log: " + options.log_path);
  }
  auto log_trial = [&](const char* check, int trial, bool pass, double err) {
    if (!log.is_open()) return;
    nlohmann::ordered_json line;
    line["check"] = check;
    line["trial"] = trial;
    line["pass"] = pass;
    line["max_err"] = err;
    log << line.dump() << "\n";
  };

  // Small-table policies keep full-table finite differences fast.
  const Vocab vocab(4);
  const int n_contexts = 2;
  const int max_len = 5;

  auto random_policy = [&](Rng& stream) {
    TabularPolicy policy(vocab, n_contexts, max_len);
    for (double& v : policy.theta().data()) v = 2.0 * stream.next_double() - 1.0;
    return policy;
  };

  for (int trial = 0; trial < options.trials; ++trial) {
    Rng stream = rng.derive({1, static_cast<uint64_t>(trial)});
    TabularPolicy policy = random_policy(stream);
    const int context = static_cast<int>(stream.next_below(n_contexts));
    const TokenSequence seq = policy.sample(context, stream);

    const ParamTable analytic = policy.grad_logprob(context, seq);
    const ParamTable numeric = finite_diff_grad(
        [&](const ParamTable& theta) {
          TabularPolicy probe = policy;
          probe.theta() = theta;
          return probe.logprob(context, seq);
        },
        policy.theta(), 1e-5);
    const GradCompare cmp = compare_grads(analytic, numeric);
    ++report.logprob_total;
    report.logprob_pass += cmp.pass ? 1 : 0;
    log_trial("logprob_gradient", trial, cmp.pass, cmp.max_rel_err);
  }

  for (int trial = 0; trial < options.trials; ++trial) {
    Rng stream = rng.derive({2, static_cast<uint64_t>(trial)});
    TabularPolicy policy = random_policy(stream);
    // Batch NLL of fixed labels against finite differences.
    std::vector<std::pair<int, TokenSequence>> labels;
    for (int i = 0; i < 3; ++i) {
      const int context = static_cast<int>(stream.next_below(n_contexts));
      std::vector<int> items;
      if (stream.next_below(4) != 0) items.push_back(static_cast<int>(stream.next_below(4)));
      labels.emplace_back(context,
                          tasks::serialize_label(items, tasks::SerializationVariant{true, true}));
    }
    auto nll = [&](const ParamTable& theta) {
      TabularPolicy probe = policy;
      probe.theta() = theta;
      double sum = 0.0;
      for (const auto& [context, label] : labels) sum += -probe.logprob(context, label);
      return sum / static_cast<double>(labels.size());
    };
    ParamTable analytic(n_contexts, max_len, vocab.size());
    for (const auto& [context, label] : labels)
      policy.accumulate_grad_logprob(context, label,
                                     -1.0 / static_cast<double>(labels.size()), analytic);
    const ParamTable numeric = finite_diff_grad(nll, policy.theta(), 1e-5);
    const GradCompare cmp = compare_grads(analytic, numeric);
    ++report.sft_total;
    report.sft_pass += cmp.pass ? 1 : 0;
    log_trial("sft_gradient", trial, cmp.pass, cmp.max_rel_err);
  }

  {
    const int group_sizes[] = {2, 4, 8};
    trainer::RunConfig cfg;
    cfg.shape = trainer::PolicyShape{4, n_contexts, 8};
    for (int trial = 0; trial < options.trials; ++trial) {
      Rng stream = rng.derive({3, static_cast<uint64_t>(trial)});
      cfg.group_size = group_sizes[trial % 3];
      cfg.seed = stream.next_u64();
      TabularPolicy policy(Vocab(4), n_contexts, 8);
      for (double& v : policy.theta().data()) v = 2.0 * stream.next_double() - 1.0;
      std::vector<tasks::TaskInstance> batch;
      for (int i = 0; i < 3; ++i) {
        tasks::TaskInstance task;
        task.id = trial * 100 + i;
        task.context = static_cast<int>(stream.next_below(n_contexts));
        task.gt_items = tasks::context_gt(tasks::TaskFamily::kPostTrain, task.context,
                                          n_contexts, 4);
        batch.push_back(task);
      }
      const DecompositionReport dec = check_decomposition(policy, batch, cfg, cfg.seed);
      ++report.decomposition_total;
      report.decomposition_pass += dec.pass ? 1 : 0;
      log_trial("decomposition", trial, dec.pass, dec.max_abs_err);
    }
  }

  {
    trainer::RunConfig cfg;
    cfg.shape = trainer::PolicyShape{4, n_contexts, 8};
    cfg.group_size = 4;
    for (int trial = 0; trial < 2 * options.trials; ++trial) {
      Rng stream = rng.derive({4, static_cast<uint64_t>(trial)});
      TabularPolicy old_policy(Vocab(4), n_contexts, 8);
      for (double& v : old_policy.theta().data()) v = 2.0 * stream.next_double() - 1.0;
      tasks::TaskInstance task;
      task.id = trial;
      task.context = static_cast<int>(stream.next_below(n_contexts));
      task.gt_items =
          tasks::context_gt(tasks::TaskFamily::kPostTrain, task.context, n_contexts, 4);
      cfg.seed = stream.next_u64();
      const Rng step_rng = Rng(cfg.seed).derive({0x627275ull});
      const auto groups = trainer::prepare_groups(
          old_policy, std::span(&task, 1), cfg, /*with_label=*/true, step_rng);

      // Perturb off-sync so clipping activates, then cross-check the loss.
      TabularPolicy policy = old_policy;
      for (double& v : policy.theta().data()) v += 0.6 * (2.0 * stream.next_double() - 1.0);
      const trainer::SurrogateEval eval =
          trainer::eval_clipped_surrogate(policy, groups, cfg.epsilon_clip);
      std::vector<double> advantages = groups[0].advantages.rollouts;
      advantages.push_back(groups[0].advantages.label.value_or(0.0));
      const double oracle =
          brute_force_surrogate(policy, old_policy, groups[0], advantages, cfg.epsilon_clip);
      const double err = std::fabs(eval.loss - oracle);
      const bool pass = err < 1e-9;
      ++report.surrogate_total;
      report.surrogate_pass += pass ? 1 : 0;
      log_trial("surrogate", trial, pass, err);
    }
  }

  auto line = [&](const char* name, int pass, int total) {
    out << "gradcheck: " << name << " " << pass << "/" << total << " trials "
        << (pass == total ? "PASS" : "FAIL") << "\n";
  };
  line("logprob-gradient", report.logprob_pass, report.logprob_total);
  line("sft-gradient", report.sft_pass, report.sft_total);
  line("decomposition", report.decomposition_pass, report.decomposition_total);
  line("surrogate", report.surrogate_pass, report.surrogate_total);
  report.all_pass = report.logprob_pass == report.logprob_total &&
                    report.sft_pass == report.sft_total &&
                    report.decomposition_pass == report.decomposition_total &&
                    report.surrogate_pass == report.surrogate_total &&
                    report.logprob_total > 0;
  out << "gradcheck: overall " << (report.all_pass ? "PASS" : "FAIL") << "\n";
  return report;
}

}  // namespace visurf::verify
