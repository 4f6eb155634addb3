#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "visurf/table.hpp"
#include "visurf/trainer.hpp"

namespace visurf::verify {

/**
 * Independent numerical oracles. Nothing here shares an evaluation path
 * with the trainer's fused loss-and-gradient routine: finite differences
 * probe scalar functions coordinate by coordinate, the surrogate oracle
 * evaluates the clipped objective term by term from scratch, and the
 * decomposition check reassembles the unified gradient from its
 * reinforcement and supervision parts using grad_logprob directly.
 */

/// Central finite differences of f over every coordinate of theta.
ParamTable finite_diff_grad(const std::function<double(const ParamTable&)>& f,
                            const ParamTable& theta, double h);

/// Central finite differences over a coordinate subset (for large tables).
std::vector<double> finite_diff_grad_at(const std::function<double(const ParamTable&)>& f,
                                        const ParamTable& theta,
                                        std::span<const size_t> coords, double h);

struct GradCompare {
  double max_rel_err = 0.0;
  size_t worst_coord = 0;
  bool pass = true;
};

/// Coordinate-wise |a - b| <= max(rel_tol * max(|a|, |b|), abs_floor).
GradCompare compare_grads(const ParamTable& analytic, const ParamTable& numeric,
                          double rel_tol = 1e-6, double abs_floor = 1e-9);

/// Literal term-by-term evaluation of one task's clipped objective:
/// -(1/n) * sum_t min(ratio_t * adv_t, clip(ratio_t) * adv_t), recomputing
/// both policies' log-probs. `advantages` pairs with rollouts first and the
/// label (when present) last.
double brute_force_surrogate(const TabularPolicy& policy, const TabularPolicy& old_policy,
                             const trainer::PreparedTask& group,
                             std::span<const double> advantages, double epsilon_clip);

/// Gradient table  sum_i scale * coef_i * grad_logprob(context_i, seq_i),
/// assembled from materialized per-sequence gradients.
struct WeightedSequence {
  int context = 0;
  const TokenSequence* seq = nullptr;
  double coef = 0.0;
};
ParamTable assemble_gradient(const TabularPolicy& policy,
                             std::span<const WeightedSequence> terms, double scale);

struct DecompositionReport {
  double max_abs_err = 0.0;
  double sft_term_max_abs = 0.0;  // largest entry of the label-side table
  bool pass = false;
};

/// At policy sync, checks that the implemented unified gradient equals the
/// independently assembled rollout term plus label term, component-wise
/// within 1e-9. Samples its own batch groups from the given tasks.
DecompositionReport check_decomposition(const TabularPolicy& policy,
                                        std::span<const tasks::TaskInstance> batch,
                                        const trainer::RunConfig& cfg, uint64_t seed);

struct GradcheckOptions {
  int trials = 50;
  uint64_t seed = 20240501;
  std::string log_path;  // JSON Lines trial log; empty disables
};

struct GradcheckReport {
  int logprob_pass = 0, logprob_total = 0;
  int sft_pass = 0, sft_total = 0;
  int decomposition_pass = 0, decomposition_total = 0;
  int surrogate_pass = 0, surrogate_total = 0;
  bool all_pass = false;
};

/// Runs the full oracle battery, printing one line per check to `out`.
GradcheckReport run_gradcheck(const GradcheckOptions& options, std::ostream& out);

}  // namespace visurf::verify
