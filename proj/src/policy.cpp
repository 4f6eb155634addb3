#include "visurf/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "visurf/errors.hpp"

namespace visurf {

namespace {

// log(sum(exp(row))) with max-subtraction; immune to large logits.
double log_sum_exp(std::span<const double> row) {
  double m = row[0];
  for (double v : row) m = std::max(m, v);
  double s = 0.0;
  for (double v : row) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

TabularPolicy::TabularPolicy(Vocab vocab, int n_contexts, int max_len)
    : vocab_(vocab),
      n_contexts_(n_contexts),
      max_len_(max_len),
      theta_(n_contexts, max_len, vocab.size()) {
  if (n_contexts <= 0) throw ConfigError("policy: need at least one context class");
  if (max_len < 0) throw ConfigError("policy: max_len must be nonnegative");
}

double& TabularPolicy::logit(int context, int position, int prev, int token) {
  check_context(context);
  return theta_.at(context, position, prev_index(prev), token);
}

void TabularPolicy::check_context(int context) const {
  if (context < 0 || context >= n_contexts_)
    throw DataError("policy: context class " + std::to_string(context) + " out of range");
}

void TabularPolicy::check_sequence(const TokenSequence& seq) const {
  if (seq.length() > max_len_) throw DataError("policy: sequence longer than max_len");
  for (int id : seq.ids)
    if (id < 0 || id >= vocab_.size())
      throw DataError("policy: sequence contains token id out of range");
}

double TabularPolicy::logprob(int context, const TokenSequence& seq) const {
  check_context(context);
  check_sequence(seq);
  double lp = 0.0;
  int prev = vocab_.size();
  for (int p = 0; p < seq.length(); ++p) {
    const int tok = seq.ids[p];
    const auto row = theta_.row(context, p, prev);
    lp += row[tok] - log_sum_exp(row);
    prev = tok;
  }
  return lp;
}

void TabularPolicy::accumulate_grad_logprob(int context, const TokenSequence& seq, double coef,
                                            ParamTable& into) const {
  check_context(context);
  check_sequence(seq);
  if (!into.same_shape(theta_)) throw ConfigError("policy: gradient table shape mismatch");
  int prev = vocab_.size();
  const int v = vocab_.size();
  std::vector<double> probs(v);
  for (int p = 0; p < seq.length(); ++p) {
    const int tok = seq.ids[p];
    const auto row = theta_.row(context, p, prev);
    const double lse = log_sum_exp(row);
    for (int t = 0; t < v; ++t) probs[t] = std::exp(row[t] - lse);
    auto out = into.row(context, p, prev);
    for (int t = 0; t < v; ++t) out[t] += coef * ((t == tok ? 1.0 : 0.0) - probs[t]);
    prev = tok;
  }
}

ParamTable TabularPolicy::grad_logprob(int context, const TokenSequence& seq) const {
  ParamTable g(n_contexts_, max_len_, vocab_.size());
  accumulate_grad_logprob(context, seq, 1.0, g);
  return g;
}

std::vector<double> TabularPolicy::conditional_probs(int context, int position, int prev) const {
  check_context(context);
  const auto row = theta_.row(context, position, prev_index(prev));
  const double lse = log_sum_exp(row);
  std::vector<double> probs(vocab_.size());
  for (int t = 0; t < vocab_.size(); ++t) probs[t] = std::exp(row[t] - lse);
  return probs;
}

double TabularPolicy::step_entropy(int context, int position, int prev) const {
  const auto row = theta_.row(context, position, prev_index(prev));
  const double lse = log_sum_exp(row);
  // H = lse - sum_t p_t * logit_t
  double acc = 0.0;
  for (double l : row) acc += std::exp(l - lse) * l;
  return lse - acc;
}

TokenSequence TabularPolicy::sample(int context, Rng& rng) const {
  check_context(context);
  TokenSequence seq;
  int prev = kStart;
  for (int p = 0; p < max_len_; ++p) {
    const auto probs = conditional_probs(context, p, prev);
    const int tok = rng.categorical(probs);
    seq.ids.push_back(tok);
    if (tok == Vocab::kEos) {
      seq.terminated = true;
      break;
    }
    prev = tok;
  }
  return seq;
}

std::vector<TokenSequence> TabularPolicy::sample_group(int context, int group_size,
                                                       const Rng& base) const {
  if (group_size < 2)
    throw ConfigError("policy: rollout group size must be at least 2");
  std::vector<TokenSequence> group;
  group.reserve(group_size);
  for (int j = 0; j < group_size; ++j) {
    Rng stream = base.derive({0x726f6c6cull, static_cast<uint64_t>(j)});
    group.push_back(sample(context, stream));
  }
  return group;
}

TokenSequence TabularPolicy::greedy_decode(int context) const {
  check_context(context);
  TokenSequence seq;
  int prev = kStart;
  for (int p = 0; p < max_len_; ++p) {
    const auto row = theta_.row(context, p, prev_index(prev));
    int best = 0;
    for (int t = 1; t < vocab_.size(); ++t)
      if (row[t] > row[best]) best = t;
    seq.ids.push_back(best);
    if (best == Vocab::kEos) {
      seq.terminated = true;
      break;
    }
    prev = best;
  }
  return seq;
}

double TabularPolicy::mean_token_entropy(std::span<const int> contexts, int sample_budget,
                                         Rng rng) const {
  if (sample_budget < 1) throw ConfigError("policy: entropy sample budget must be >= 1");
  if (contexts.empty()) throw ConfigError("policy: entropy estimation needs a context");
  double total = 0.0;
  int64_t steps = 0;
  for (int i = 0; i < sample_budget; ++i) {
    const int context = contexts[i % contexts.size()];
    Rng stream = rng.derive({0x656e74ull, static_cast<uint64_t>(i)});
    const TokenSequence seq = sample(context, stream);
    int prev = kStart;
    for (int p = 0; p < seq.length(); ++p) {
      total += step_entropy(context, p, prev);
      prev = seq.ids[p];
      ++steps;
    }
  }
  return steps == 0 ? 0.0 : total / static_cast<double>(steps);
}

void TabularPolicy::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("policy: cannot open checkpoint for writing: " + path.string());
  out << "visurf-policy 1\n";
  out << "V " << vocab_.size() << " C " << n_contexts_ << " max_len " << max_len_ << "\n";
  char buf[64];
  for (double v : theta_.data()) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", v);
    out << buf;
  }
  if (!out) throw IoError("policy: write failed: " + path.string());
}

TabularPolicy TabularPolicy::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("policy: cannot open checkpoint: " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "visurf-policy" || version != 1)
    throw IoError("policy: unrecognized checkpoint header in " + path.string());
  std::string kv, kc, km;
  int v = 0, c = 0, m = 0;
  in >> kv >> v >> kc >> c >> km >> m;
  if (kv != "V" || kc != "C" || km != "max_len" || v < Vocab::kNumStructural || c <= 0 || m < 0)
    throw IoError("policy: malformed checkpoint dimensions in " + path.string());
  TabularPolicy policy(Vocab(v - Vocab::kNumStructural), c, m);
  for (double& slot : policy.theta_.data()) {
    if (!(in >> slot)) throw IoError("policy: truncated checkpoint: " + path.string());
  }
  return policy;
}

}  // namespace visurf
