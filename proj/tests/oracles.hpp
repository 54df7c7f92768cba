#pragma once

// Brute-force metric references shared by the unit and acceptance suites.

#include <algorithm>
#include <cstdlib>
#include <optional>
#include <vector>

namespace hrgr::testing {

inline double pair_count_auc(const std::vector<double>& s, const std::vector<double>& l) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (l[i] != 1.0) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[j] != 0.0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

struct Sweep {
  double f1, threshold;
};

// Every midpoint, confusion counted from scratch; smallest |FPR - FNR|,
// then higher F1, then lower threshold.
inline Sweep exhaustive_sweep(const std::vector<double>& s, const std::vector<double>& l) {
  std::vector<double> distinct(s);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  long long pos = 0, neg = 0;
  for (double v : l) (v == 1.0 ? pos : neg) += 1;
  std::optional<Sweep> best;
  long long best_gap = 0;
  for (std::size_t k = 0; k + 1 < distinct.size(); ++k) {
    const double t = 0.5 * (distinct[k] + distinct[k + 1]);
    long long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const bool predicted = s[i] > t;
      if (predicted && l[i] == 1.0) ++tp;
      if (predicted && l[i] == 0.0) ++fp;
      if (!predicted && l[i] == 1.0) ++fn;
    }
    const long long gap = std::llabs(fp * pos - fn * neg);  // |FPR - FNR| * P * N
    const double f1 = 2.0 * tp / (2.0 * tp + fp + fn);
    if (!best || gap < best_gap || (gap == best_gap && f1 > best->f1)) {
      best = Sweep{f1, t};
      best_gap = gap;
    }
  }
  return *best;
}

}  // namespace hrgr::testing
