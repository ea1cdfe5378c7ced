#pragma once

#include <cmath>
#include <random>
#include <vector>

namespace sphsfm::detail {

inline void sample_distinct(std::mt19937_64& rng, int n, int k, std::vector<int>& out) {
  out.clear();
  std::uniform_int_distribution<int> pick(0, n - 1);
  while (static_cast<int>(out.size()) < k) {
    const int idx = pick(rng);
    bool seen = false;
    for (int v : out) seen = seen || v == idx;
    if (!seen) out.push_back(idx);
  }
}

/// Iterations needed to draw one all-inlier sample of size k with the given confidence.
inline long required_iterations(double inlier_ratio, int k, double confidence, long cap) {
  const double good = std::pow(inlier_ratio, k);
  if (good >= 1.0 - 1e-15) return 0;
  if (good <= 0.0) return cap;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - good);
  if (!std::isfinite(n) || n > static_cast<double>(cap)) return cap;
  return static_cast<long>(std::ceil(n));
}

}  // namespace sphsfm::detail
