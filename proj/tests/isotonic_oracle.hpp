#pragma once

// Brute-force least-squares isotonic fit: try every cut of the score-sorted
// points into contiguous blocks (never splitting tied scores), keep the
// blocks whose means are non-decreasing, take the one with least squared
// error.

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

namespace mvdam::fixtures {

// Fitted value per input position (original order).
inline std::vector<double> isotonic_brute_force(const std::vector<double>& scores, const std::vector<double>& targets) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = targets[order[i]];

  double best_sse = std::numeric_limits<double>::infinity();
  std::vector<double> best(n);
  const std::size_t cuts = n - 1;
  for (std::size_t mask = 0; mask < (std::size_t{1} << cuts); ++mask) {
    bool ok = true;
    for (std::size_t c = 0; c < cuts && ok; ++c)
      if ((mask >> c & 1) && scores[order[c]] == scores[order[c + 1]]) ok = false;
    if (!ok) continue;
    std::vector<double> fit(n);
    double prev = -std::numeric_limits<double>::infinity(), sse = 0.0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < n && ok; ++i) {
      if (i + 1 < n && !(mask >> i & 1)) continue;
      double mean = 0.0;
      for (std::size_t k = start; k <= i; ++k) mean += y[k];
      mean /= static_cast<double>(i + 1 - start);
      if (mean < prev - 1e-12) ok = false;
      prev = mean;
      for (std::size_t k = start; k <= i; ++k) {
        fit[k] = mean;
        sse += (y[k] - mean) * (y[k] - mean);
      }
      start = i + 1;
    }
    if (ok && sse < best_sse - 1e-12) {
      best_sse = sse;
      best = fit;
    }
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[order[i]] = best[i];
  return out;
}

}  // namespace mvdam::fixtures
