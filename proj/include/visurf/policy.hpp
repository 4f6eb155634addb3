#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "visurf/rng.hpp"
#include "visurf/table.hpp"
#include "visurf/vocab.hpp"

namespace visurf {

/**
 * Token sequence emitted by (or scored under) a policy. `ids` contains the
 * terminating EOS when `terminated` is true, and EOS counts toward the
 * length; a sequence cut off at max_len has terminated == false and no EOS.
 */
struct TokenSequence {
  std::vector<int> ids;
  bool terminated = false;

  int length() const { return static_cast<int>(ids.size()); }

  friend bool operator==(const TokenSequence& a, const TokenSequence& b) {
    return a.terminated == b.terminated && a.ids == b.ids;
  }
};

/**
 * Exactly-differentiable autoregressive categorical policy over a small
 * vocabulary. The conditional distribution at each (context, position,
 * previous token) is the softmax of one logit row, so log-probabilities,
 * gradients, and per-step entropies are all available in closed form.
 *
 * Copies are deep (plain value semantics); freezing the behavior policy for
 * rollout generation is just `TabularPolicy old = policy;`.
 *
 * Evaluation and sampling are const and safe to run concurrently; parameter
 * updates are single-writer and must not overlap reads of the same instance.
 */
class TabularPolicy {
 public:
  // Marker accepted by logit() for the start-of-sequence predecessor.
  static constexpr int kStart = -1;

  TabularPolicy(Vocab vocab, int n_contexts, int max_len);

  const Vocab& vocab() const { return vocab_; }
  int n_contexts() const { return n_contexts_; }
  int max_len() const { return max_len_; }

  ParamTable& theta() { return theta_; }
  const ParamTable& theta() const { return theta_; }

  // Convenience accessor; prev == kStart addresses the start-of-sequence row.
  double& logit(int context, int position, int prev, int token);

  /// Sum over positions of the log conditional probability of each token,
  /// including the terminating EOS when present. Always finite and <= 0.
  double logprob(int context, const TokenSequence& seq) const;

  /// Analytic gradient of logprob with respect to theta. Only slots visited
  /// by the sequence are nonzero; each visited row holds onehot(token) -
  /// softmax(logits), which sums to zero along the token axis.
  ParamTable grad_logprob(int context, const TokenSequence& seq) const;

  /// Fused form: into += coef * grad_logprob(context, seq). Identical
  /// arithmetic to materializing the gradient and calling axpy.
  void accumulate_grad_logprob(int context, const TokenSequence& seq, double coef,
                               ParamTable& into) const;

  /// Autoregressive ancestral sampling; stops at EOS or max_len.
  TokenSequence sample(int context, Rng& rng) const;

  /// G independent rollouts with per-rollout sub-streams derived from the
  /// base stream, so the result is identical under any execution order.
  /// The caller keys `base` by task identity. Requires G >= 2.
  std::vector<TokenSequence> sample_group(int context, int group_size, const Rng& base) const;

  /// Argmax decoding (ties broken toward the lowest token id).
  TokenSequence greedy_decode(int context) const;

  /// Monte-Carlo estimate, over `sample_budget` rollouts cycling through
  /// `contexts`, of the mean exact conditional entropy per visited step.
  /// Always within [0, ln V].
  double mean_token_entropy(std::span<const int> contexts, int sample_budget, Rng rng) const;

  // Softmax of one logit row; prev == kStart addresses the start row.
  std::vector<double> conditional_probs(int context, int position, int prev) const;
  // Exact entropy of one conditional distribution, in nats.
  double step_entropy(int context, int position, int prev) const;

  // Textual checkpoint; values at 17 significant digits round-trip bit-exact.
  void save(const std::filesystem::path& path) const;
  static TabularPolicy load(const std::filesystem::path& path);

 private:
  int prev_index(int prev) const { return prev == kStart ? vocab_.size() : prev; }
  void check_context(int context) const;
  void check_sequence(const TokenSequence& seq) const;

  Vocab vocab_;
  int n_contexts_;
  int max_len_;
  ParamTable theta_;
};

}  // namespace visurf
