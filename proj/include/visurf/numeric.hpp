#pragma once

#include <span>

namespace visurf::numeric {

// Left-to-right mean. Reward smoothing and advantage estimation both use this
// helper so the rollout mean they compute is bitwise identical; the
// smoothed-label advantage then cancels to exactly zero.
inline double mean(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double max(std::span<const double> xs) {
  double m = xs.empty() ? 0.0 : xs[0];
  for (double x : xs)
    if (x > m) m = x;
  return m;
}

}  // namespace visurf::numeric
