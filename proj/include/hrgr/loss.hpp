#pragma once

#include "hrgr/tensor.hpp"

namespace hrgr {

enum class Reduction { kSum, kMean };

struct FocalConfig {
  double alpha = 0.5;
  double gamma = 2.0;
  double clamp_eps = 1e-7;
  Reduction reduction = Reduction::kSum;

  void validate() const;
};

// -sum( alpha (1-y)^gamma yhat log y + (1-alpha) y^gamma (1-yhat) log(1-y) )
// over predictions y in (0,1) and a {0,1} target yhat of the same shape.
// y is clamped to [eps, 1-eps] before the logarithms.
double focal_loss(const Tensor& pred, const Tensor& target, const FocalConfig& cfg = {});

// d loss / d pred scaled by `upstream`; zero wherever the clamp is active.
Tensor focal_loss_vjp(const Tensor& pred, const Tensor& target, const FocalConfig& cfg, double upstream);

}  // namespace hrgr
