#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "visurf/errors.hpp"

namespace visurf {

/**
 * Dense real table indexed by (context, position, previous token, token).
 * Used both for policy logits and for gradients, which share this shape.
 *
 * The previous-token axis has size V + 1: index V stands for "start of
 * sequence" (no token emitted yet).
 */
class ParamTable {
 public:
  ParamTable() = default;

  ParamTable(int n_contexts, int max_len, int vocab_size)
      : n_contexts_(n_contexts), max_len_(max_len), vocab_size_(vocab_size) {
    if (n_contexts < 0 || max_len < 0 || vocab_size <= 0)
      throw ConfigError("table: invalid dimensions");
    data_.assign(static_cast<size_t>(n_contexts) * max_len * (vocab_size + 1) * vocab_size, 0.0);
  }

  int n_contexts() const { return n_contexts_; }
  int max_len() const { return max_len_; }
  int vocab_size() const { return vocab_size_; }
  size_t size() const { return data_.size(); }

  size_t index(int c, int p, int prev, int tok) const {
    return ((static_cast<size_t>(c) * max_len_ + p) * (vocab_size_ + 1) + prev) * vocab_size_ +
           tok;
  }

  double& at(int c, int p, int prev, int tok) { return data_[index(c, p, prev, tok)]; }
  double at(int c, int p, int prev, int tok) const { return data_[index(c, p, prev, tok)]; }

  std::span<double> row(int c, int p, int prev) {
    return {data_.data() + index(c, p, prev, 0), static_cast<size_t>(vocab_size_)};
  }
  std::span<const double> row(int c, int p, int prev) const {
    return {data_.data() + index(c, p, prev, 0), static_cast<size_t>(vocab_size_)};
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void fill(double value) { data_.assign(data_.size(), value); }

  bool same_shape(const ParamTable& other) const {
    return n_contexts_ == other.n_contexts_ && max_len_ == other.max_len_ &&
           vocab_size_ == other.vocab_size_;
  }

  // this += a * other
  void axpy(double a, const ParamTable& other) {
    if (!same_shape(other)) throw ConfigError("table: shape mismatch in axpy");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += a * other.data_[i];
  }

  double l2_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
  }

  double max_abs_diff(const ParamTable& other) const {
    if (!same_shape(other)) throw ConfigError("table: shape mismatch in max_abs_diff");
    double m = 0.0;
    for (size_t i = 0; i < data_.size(); ++i)
      m = std::max(m, std::fabs(data_[i] - other.data_[i]));
    return m;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const ParamTable& a, const ParamTable& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  int n_contexts_ = 0;
  int max_len_ = 0;
  int vocab_size_ = 1;
  std::vector<double> data_;
};

}  // namespace visurf
