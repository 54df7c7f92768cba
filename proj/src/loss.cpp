#include "hrgr/loss.hpp"

#include <algorithm>
#include <cmath>

namespace hrgr {

void FocalConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("focal loss: alpha must lie in (0, 1)");
  if (!(gamma >= 0.0)) throw ValidationError("focal loss: gamma must be >= 0");
  if (!(clamp_eps > 0.0 && clamp_eps < 0.5)) throw ValidationError("focal loss: clamp_eps must lie in (0, 0.5)");
}

namespace {

void check_inputs(const Tensor& pred, const Tensor& target) {
  require_f64(pred, "focal loss predictions");
  require_f64(target, "focal loss target");
  if (pred.shape() != target.shape()) {
    throw ShapeError("focal loss: predictions " + to_string(pred.shape()) + " vs target " +
                     to_string(target.shape()));
  }
  for (double t : target.f64()) {
    if (t != 0.0 && t != 1.0) throw ValidationError("focal loss: target entries must be 0 or 1");
  }
}

// pow with 0^0 = 1, matching the gamma = 0 reduction to cross-entropy.
double power(double base, double exponent) { return exponent == 0.0 ? 1.0 : std::pow(base, exponent); }

}  // namespace

double focal_loss(const Tensor& pred, const Tensor& target, const FocalConfig& cfg) {
  cfg.validate();
  check_inputs(pred, target);
  auto y = pred.f64();
  auto t = target.f64();
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = std::clamp(y[i], cfg.clamp_eps, 1.0 - cfg.clamp_eps);
    if (t[i] == 1.0) {
      total -= cfg.alpha * power(1.0 - p, cfg.gamma) * std::log(p);
    } else {
      total -= (1.0 - cfg.alpha) * power(p, cfg.gamma) * std::log(1.0 - p);
    }
  }
  return cfg.reduction == Reduction::kMean ? total / static_cast<double>(y.size()) : total;
}

Tensor focal_loss_vjp(const Tensor& pred, const Tensor& target, const FocalConfig& cfg, double upstream) {
  cfg.validate();
  check_inputs(pred, target);
  auto y = pred.f64();
  auto t = target.f64();
  Tensor grad(pred.shape());
  auto g = grad.f64();
  const double factor =
      cfg.reduction == Reduction::kMean ? upstream / static_cast<double>(y.size()) : upstream;
  const double a = cfg.alpha, gm = cfg.gamma;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = y[i];
    if (p < cfg.clamp_eps || p > 1.0 - cfg.clamp_eps) continue;
    double d;
    if (t[i] == 1.0) {
      // d/dp [-a (1-p)^g log p] = -a [ -g (1-p)^(g-1) log p + (1-p)^g / p ]
      const double decay = gm == 0.0 ? 0.0 : gm * power(1.0 - p, gm - 1.0) * std::log(p);
      d = -a * (-decay + power(1.0 - p, gm) / p);
    } else {
      // d/dp [-(1-a) p^g log(1-p)] = -(1-a) [ g p^(g-1) log(1-p) - p^g / (1-p) ]
      const double growth = gm == 0.0 ? 0.0 : gm * power(p, gm - 1.0) * std::log(1.0 - p);
      d = -(1.0 - a) * (growth - power(p, gm) / (1.0 - p));
    }
    g[i] = factor * d;
  }
  return grad;
}

}  // namespace hrgr
