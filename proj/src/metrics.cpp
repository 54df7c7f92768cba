#include "hrgr/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

namespace hrgr {

namespace {

struct Scored {
  std::vector<double> scores;
  std::vector<bool> positive;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

Scored prepare(const Tensor& scores, const Tensor& labels, const char* what) {
  if (scores.numel() != labels.numel()) {
    throw ShapeError(std::string(what) + ": scores " + to_string(scores.shape()) + " vs labels " +
                     to_string(labels.shape()));
  }
  Scored s;
  const Tensor sv = scores.to_f64();
  const Tensor lv = labels.to_f64();
  s.scores.assign(sv.f64().begin(), sv.f64().end());
  for (double l : lv.f64()) {
    if (l != 0.0 && l != 1.0) throw ValidationError(std::string(what) + ": labels must be 0 or 1");
    s.positive.push_back(l == 1.0);
    (l == 1.0 ? s.positives : s.negatives)++;
  }
  if (s.positives == 0 || s.negatives == 0) {
    throw ValidationError(std::string(what) + ": labels contain a single class");
  }
  return s;
}

std::vector<std::size_t> order_by_score(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

double f1_of(const Confusion& c) {
  const auto denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

}  // namespace

double pixel_auc(const Tensor& scores, const Tensor& labels) {
  const Scored s = prepare(scores, labels, "pixel_auc");
  const auto order = order_by_score(s.scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && s.scores[order[j]] == s.scores[order[i]]) ++j;
    // 1-based ranks i+1 .. j share their mean
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (s.positive[order[t]]) rank_sum += midrank;
    i = j;
  }
  const double p = static_cast<double>(s.positives), n = static_cast<double>(s.negatives);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

F1AtEer f1_at_eer(const Tensor& scores, const Tensor& labels) {
  const Scored s = prepare(scores, labels, "f1_at_eer");
  const auto order = order_by_score(s.scores);
  const auto total_p = static_cast<std::int64_t>(s.positives);
  const auto total_n = static_cast<std::int64_t>(s.negatives);

  // Start with every pixel predicted positive, then move groups of equal
  // score below the threshold one at a time.
  Confusion c{s.positives, s.negatives, 0, 0};
  F1AtEer best{0.0, s.scores[order.front()], {0, 0, s.negatives, s.positives}};
  std::int64_t best_gap = -1;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && s.scores[order[j]] == s.scores[order[i]]) ++j;
    for (std::size_t t = i; t < j; ++t) {
      if (s.positive[order[t]]) {
        --c.tp;
        ++c.fn;
      } else {
        --c.fp;
        ++c.tn;
      }
    }
    if (j == order.size()) break;
    const double threshold = 0.5 * (s.scores[order[i]] + s.scores[order[j]]);
    // |FPR - FNR| compared exactly as |FP * P - FN * N|
    const std::int64_t gap = std::llabs(static_cast<std::int64_t>(c.fp) * total_p -
                                        static_cast<std::int64_t>(c.fn) * total_n);
    const double f1 = f1_of(c);
    if (best_gap < 0 || gap < best_gap || (gap == best_gap && f1 > best.f1)) {
      best_gap = gap;
      best = {f1, threshold, c};
    }
    i = j;
  }
  return best;
}

EvalResult evaluate(const Tensor& scores, const Tensor& labels) {
  const auto f = f1_at_eer(scores, labels);
  return {pixel_auc(scores, labels), f.f1, f.threshold, f.confusion};
}

double adjusted_rand_index(const Tensor& labels_a, const Tensor& labels_b) {
  if (labels_a.numel() != labels_b.numel()) {
    throw ShapeError("adjusted_rand_index: lengths " + std::to_string(labels_a.numel()) + " and " +
                     std::to_string(labels_b.numel()) + " differ");
  }
  auto a = labels_a.idx();
  auto b = labels_b.idx();
  if (a.size() < 2) return 1.0;
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> joint;
  std::map<std::uint32_t, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [key, count] : joint) index += pairs(count);
  for (const auto& [key, count] : rows) sum_rows += pairs(count);
  for (const auto& [key, count] : cols) sum_cols += pairs(count);
  const double expected = sum_rows * sum_cols / pairs(static_cast<double>(a.size()));
  const double maximum = 0.5 * (sum_rows + sum_cols);
  if (maximum == expected) return 1.0;
  return (index - expected) / (maximum - expected);
}

}  // namespace hrgr
