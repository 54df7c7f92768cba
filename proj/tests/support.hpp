#pragma once

#include <random>

#include "hrgr/tensor.hpp"

namespace hrgr::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> uni(lo, hi);
  Tensor t(shape);
  for (auto& v : t.f64()) v = uni(rng);
  return t;
}

// n x m with positive entries and unit row sums.
inline Tensor random_stochastic(std::size_t n, std::size_t m, std::mt19937_64& rng) {
  Tensor d = random_tensor({n, m}, rng, 0.05, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) total += d(i, j);
    for (std::size_t j = 0; j < m; ++j) d(i, j) /= total;
  }
  return d;
}

// n x m rows that are one-hot on labels[i] (0-based).
inline Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t m) {
  Tensor d({labels.size(), m});
  for (std::size_t i = 0; i < labels.size(); ++i) d(i, labels[i]) = 1.0;
  return d;
}

}  // namespace hrgr::testing
