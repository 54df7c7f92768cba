#pragma once

#include <cstddef>

#include "hrgr/tensor.hpp"

namespace hrgr {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
};

struct F1AtEer {
  double f1 = 0.0;
  double threshold = 0.0;
  Confusion confusion;
};

struct EvalResult {
  double auc = 0.0;
  double f1_eer = 0.0;
  double eer_threshold = 0.0;
  Confusion confusion;
};

// Mann-Whitney AUC with midranks for tied scores. Labels are 0/1 in any
// numeric dtype. Throws ValidationError unless both classes are present.
double pixel_auc(const Tensor& scores, const Tensor& labels);

// Threshold among midpoints of consecutive distinct scores minimising
// |FPR - FNR| (ties: higher F1, then lower threshold); a pixel is predicted
// positive when score > threshold. With a single distinct score the
// threshold is that score and nothing is predicted positive.
F1AtEer f1_at_eer(const Tensor& scores, const Tensor& labels);

EvalResult evaluate(const Tensor& scores, const Tensor& labels);

// Pair-counting ARI of two index labelings of equal length. Two trivial
// single-cluster partitions score 1.
double adjusted_rand_index(const Tensor& labels_a, const Tensor& labels_b);

}  // namespace hrgr
