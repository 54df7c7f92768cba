#include "hrgr/dfp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hrgr {

void DfpConfig::validate() const {
  if (regions < 1) throw ValidationError("dfp: region count m must be >= 1");
  if (iterations < 1) throw ValidationError("dfp: iteration count T must be >= 1");
  if (!(epsilon > 0.0)) throw ValidationError("dfp: epsilon must be > 0");
  if (coord_scale && !std::isfinite(*coord_scale)) throw ValidationError("dfp: coord_scale must be finite");
}

ChannelReducer ChannelReducer::init(std::size_t in_channels, std::size_t out_channels, std::mt19937_64& rng) {
  if (out_channels == 0 || out_channels >= in_channels) {
    throw ValidationError("channel reducer must shrink channels: c'=" + std::to_string(in_channels) +
                          ", c''=" + std::to_string(out_channels));
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels));
  std::uniform_real_distribution<double> uni(-bound, bound);
  ChannelReducer r{Tensor({in_channels, out_channels}), Tensor({out_channels})};
  for (auto& v : r.weight.f64()) v = uni(rng);
  return r;
}

ChannelReducer ChannelReducer::truncation(std::size_t in_channels, std::size_t out_channels) {
  if (out_channels == 0 || out_channels >= in_channels) {
    throw ValidationError("channel reducer must shrink channels: c'=" + std::to_string(in_channels) +
                          ", c''=" + std::to_string(out_channels));
  }
  ChannelReducer r{Tensor({in_channels, out_channels}), Tensor({out_channels})};
  for (std::size_t j = 0; j < out_channels; ++j) r.weight(j, j) = 1.0;
  return r;
}

GridLayout grid_factorization(std::size_t m, std::size_t h, std::size_t w) {
  if (m > h * w) {
    throw ValidationError("dfp: " + std::to_string(m) + " regions exceed the " + std::to_string(h * w) +
                          " elements of a " + std::to_string(h) + "x" + std::to_string(w) + " map");
  }
  const double aspect = static_cast<double>(h) / static_cast<double>(w);
  std::optional<GridLayout> best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t rows = 1; rows <= m; ++rows) {
    if (m % rows) continue;
    const std::size_t cols = m / rows;
    if (rows > h || cols > w) continue;
    const double gap = std::abs(static_cast<double>(rows) / static_cast<double>(cols) - aspect);
    if (gap < best_gap) {
      best_gap = gap;
      best = GridLayout{rows, cols};
    }
  }
  if (!best) {
    throw ValidationError("dfp: no grid factorization of m=" + std::to_string(m) + " fits a " + std::to_string(h) +
                          "x" + std::to_string(w) + " map");
  }
  return *best;
}

CoordScale coord_scale_for(const DfpConfig& cfg, std::size_t h, std::size_t w) {
  const double s = cfg.coord_scale.value_or(
      std::sqrt(static_cast<double>(cfg.regions) / static_cast<double>(h * w)));
  return {w > 1 ? s / static_cast<double>(w - 1) : 0.0, h > 1 ? s / static_cast<double>(h - 1) : 0.0};
}

Tensor append_coords(const Tensor& features, double scale) { return append_coords(features, {scale, scale}); }

Tensor append_coords(const Tensor& features, CoordScale scale) {
  require_rank(features, 3, "append_coords");
  const std::size_t h = features.dim(0), w = features.dim(1), c = features.dim(2);
  Tensor out({h, w, c + 2});
  auto src = features.f64();
  auto dst = out.f64();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(i * c), c,
                  dst.begin() + static_cast<std::ptrdiff_t>(i * (c + 2)));
      dst[i * (c + 2) + c] = scale.x * static_cast<double>(x);
      dst[i * (c + 2) + c + 1] = scale.y * static_cast<double>(y);
    }
  }
  return out;
}

namespace {

Tensor as_rows(const Tensor& t) {
  if (t.rank() == 2) return t;
  require_rank(t, 3, "feature map");
  return t.reshaped({t.dim(0) * t.dim(1), t.dim(2)});
}

Tensor pre_activation(const Tensor& rows, const ChannelReducer& reducer) {
  Tensor z = matmul(rows, reducer.weight);
  const std::size_t cols = z.dim(1);
  auto zv = z.f64();
  auto b = reducer.bias.f64();
  for (std::size_t i = 0; i < zv.size(); ++i) zv[i] += b[i % cols];
  return z;
}

void check_reducer(const Tensor& features, const ChannelReducer& reducer) {
  require_f64(features, "reduce_channels");
  const std::size_t c = features.shape().back();
  if (reducer.weight.rank() != 2 || reducer.weight.dim(0) != c) {
    throw ShapeError("reduce_channels: input has " + std::to_string(c) + " channels, reducer weight is " +
                     to_string(reducer.weight.shape()));
  }
  require_shape(reducer.bias, {reducer.out_channels()}, "reduce_channels bias");
}

Shape with_channels(const Shape& shape, std::size_t c) {
  Shape out = shape;
  out.back() = c;
  return out;
}

}  // namespace

Tensor reduce_channels(const Tensor& features, const ChannelReducer& reducer) {
  check_reducer(features, reducer);
  Tensor z = pre_activation(as_rows(features), reducer);
  return gelu(z).reshaped(with_channels(features.shape(), reducer.out_channels()));
}

ReducerGrad reduce_channels_vjp(const Tensor& features, const ChannelReducer& reducer, const Tensor& cotangent) {
  check_reducer(features, reducer);
  const Tensor rows = as_rows(features);
  Tensor dz = pre_activation(rows, reducer);
  auto dzv = dz.f64();
  auto g = cotangent.f64();
  if (g.size() != dzv.size()) throw ShapeError("reduce_channels_vjp: cotangent " + to_string(cotangent.shape()));
  for (std::size_t i = 0; i < dzv.size(); ++i) dzv[i] = g[i] * gelu_grad(dzv[i]);
  return {matmul_nt(dz, reducer.weight).reshaped(features.shape()), matmul_tn(rows, dz), column_sums(dz)};
}

namespace {

struct CellBounds {
  std::size_t y0, y1, x0, x1;
};

CellBounds cell_bounds(const GridLayout& grid, std::size_t cell, std::size_t h, std::size_t w) {
  const std::size_t a = cell / grid.cols, b = cell % grid.cols;
  return {a * h / grid.rows, (a + 1) * h / grid.rows, b * w / grid.cols, (b + 1) * w / grid.cols};
}

}  // namespace

Tensor init_centers_grid(const Tensor& reduced, std::size_t m) {
  require_rank(reduced, 3, "init_centers_grid");
  const std::size_t h = reduced.dim(0), w = reduced.dim(1), c = reduced.dim(2);
  const GridLayout grid = grid_factorization(m, h, w);
  Tensor centers({m, c});
  auto src = reduced.f64();
  for (std::size_t j = 0; j < m; ++j) {
    const auto cb = cell_bounds(grid, j, h, w);
    const double count = static_cast<double>((cb.y1 - cb.y0) * (cb.x1 - cb.x0));
    for (std::size_t y = cb.y0; y < cb.y1; ++y)
      for (std::size_t x = cb.x0; x < cb.x1; ++x)
        for (std::size_t k = 0; k < c; ++k) centers(j, k) += src[(y * w + x) * c + k];
    for (std::size_t k = 0; k < c; ++k) centers(j, k) /= count;
  }
  return centers;
}

Tensor init_centers_grid_vjp(const Shape& reduced_shape, std::size_t m, const Tensor& cotangent) {
  const std::size_t h = reduced_shape.at(0), w = reduced_shape.at(1), c = reduced_shape.at(2);
  require_shape(cotangent, {m, c}, "init_centers_grid_vjp cotangent");
  const GridLayout grid = grid_factorization(m, h, w);
  Tensor grad(reduced_shape);
  auto g = grad.f64();
  for (std::size_t j = 0; j < m; ++j) {
    const auto cb = cell_bounds(grid, j, h, w);
    const double count = static_cast<double>((cb.y1 - cb.y0) * (cb.x1 - cb.x0));
    for (std::size_t y = cb.y0; y < cb.y1; ++y)
      for (std::size_t x = cb.x0; x < cb.x1; ++x)
        for (std::size_t k = 0; k < c; ++k) g[(y * w + x) * c + k] = cotangent(j, k) / count;
  }
  return grad;
}

Tensor grid_labels(std::size_t h, std::size_t w, std::size_t m) {
  const GridLayout grid = grid_factorization(m, h, w);
  std::vector<std::uint32_t> labels(h * w);
  for (std::size_t j = 0; j < m; ++j) {
    const auto cb = cell_bounds(grid, j, h, w);
    for (std::size_t y = cb.y0; y < cb.y1; ++y)
      for (std::size_t x = cb.x0; x < cb.x1; ++x) labels[y * w + x] = static_cast<std::uint32_t>(j + 1);
  }
  return Tensor::from_index({h, w}, std::move(labels));
}

namespace {

void check_pair(const Tensor& features, const Tensor& centers, const char* what) {
  require_rank(features, 2, what);
  require_rank(centers, 2, what);
  require_f64(features, what);
  require_f64(centers, what);
  if (features.dim(1) != centers.dim(1)) {
    throw ShapeError(std::string(what) + ": features " + to_string(features.shape()) + " and centers " +
                     to_string(centers.shape()) + " disagree on channels");
  }
}

Tensor squared_distances(const Tensor& features, const Tensor& centers) {
  const std::size_t n = features.dim(0), m = centers.dim(0), c = features.dim(1);
  Tensor d2({n, m});
  auto f = features.f64();
  auto r = centers.f64();
  auto out = d2.f64();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        const double diff = f[i * c + k] - r[j * c + k];
        acc += diff * diff;
      }
      out[i * m + j] = acc;
    }
  }
  return d2;
}

}  // namespace

Tensor association(const Tensor& features, const Tensor& centers, double sharpness) {
  check_pair(features, centers, "association");
  if (!all_finite(features) || !all_finite(centers)) throw NumericalError("association: non-finite input");
  const std::size_t n = features.dim(0), m = centers.dim(0);
  Tensor d = squared_distances(features, centers);
  auto dv = d.f64();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = dv.data() + i * m;
    const double nearest = *std::min_element(row, row + m);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      row[j] = std::exp(-sharpness * (row[j] - nearest));
      total += row[j];
    }
    for (std::size_t j = 0; j < m; ++j) row[j] /= total;
  }
  return d;
}

AssociationGrad association_vjp(const Tensor& features, const Tensor& centers, const Tensor& assoc,
                                const Tensor& cotangent, double sharpness) {
  check_pair(features, centers, "association_vjp");
  const std::size_t n = features.dim(0), m = centers.dim(0), c = features.dim(1);
  require_shape(assoc, {n, m}, "association_vjp assoc");
  require_shape(cotangent, {n, m}, "association_vjp cotangent");
  auto f = features.f64();
  auto r = centers.f64();
  auto dv = assoc.f64();
  auto g = cotangent.f64();
  AssociationGrad grad{Tensor(features.shape()), Tensor(centers.shape())};
  auto gf = grad.features.f64();
  auto gr = grad.centers.f64();
  std::vector<double> dd2(m);
  for (std::size_t i = 0; i < n; ++i) {
    double inner = 0.0;
    for (std::size_t j = 0; j < m; ++j) inner += g[i * m + j] * dv[i * m + j];
    for (std::size_t j = 0; j < m; ++j) dd2[j] = -sharpness * dv[i * m + j] * (g[i * m + j] - inner);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t k = 0; k < c; ++k) {
        const double diff2 = 2.0 * (f[i * c + k] - r[j * c + k]) * dd2[j];
        gf[i * c + k] += diff2;
        gr[j * c + k] -= diff2;
      }
    }
  }
  return grad;
}

namespace {

void check_mean_args(const Tensor& assoc, const Tensor& features, const char* what) {
  require_rank(assoc, 2, what);
  require_rank(features, 2, what);
  require_f64(assoc, what);
  require_f64(features, what);
  if (assoc.dim(0) != features.dim(0)) {
    throw ShapeError(std::string(what) + ": association " + to_string(assoc.shape()) + " and features " +
                     to_string(features.shape()) + " disagree on element count");
  }
}

}  // namespace

Tensor weighted_region_mean(const Tensor& assoc, const Tensor& features, double epsilon) {
  check_mean_args(assoc, features, "weighted_region_mean");
  Tensor out = matmul_tn(assoc, features);
  const Tensor mass = column_sums(assoc);
  const std::size_t m = out.dim(0), c = out.dim(1);
  for (std::size_t j = 0; j < m; ++j) {
    const double denom = std::max(mass.f64()[j], epsilon);
    for (std::size_t k = 0; k < c; ++k) out(j, k) /= denom;
  }
  return out;
}

WeightedMeanGrad weighted_region_mean_vjp(const Tensor& assoc, const Tensor& features, double epsilon,
                                          const Tensor& cotangent) {
  check_mean_args(assoc, features, "weighted_region_mean_vjp");
  const std::size_t n = assoc.dim(0), m = assoc.dim(1), c = features.dim(1);
  require_shape(cotangent, {m, c}, "weighted_region_mean_vjp cotangent");
  const Tensor pooled = matmul_tn(assoc, features);
  const Tensor mass = column_sums(assoc);
  Tensor d_pooled({m, c});
  std::vector<double> d_mass(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const bool guarded = mass.f64()[j] < epsilon;
    const double denom = guarded ? epsilon : mass.f64()[j];
    double acc = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      d_pooled(j, k) = cotangent(j, k) / denom;
      acc += cotangent(j, k) * pooled(j, k);
    }
    d_mass[j] = guarded ? 0.0 : -acc / (denom * denom);
  }
  Tensor d_assoc = matmul_nt(features, d_pooled);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) d_assoc(i, j) += d_mass[j];
  return {std::move(d_assoc), matmul(assoc, d_pooled)};
}

Tensor hard_assign(const Tensor& assoc) {
  require_rank(assoc, 2, "hard_assign");
  const std::size_t n = assoc.dim(0), m = assoc.dim(1);
  std::vector<std::uint32_t> labels(n);
  auto dv = assoc.f64();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = dv.data() + i * m;
    labels[i] = static_cast<std::uint32_t>(std::max_element(row, row + m) - row) + 1;
  }
  return Tensor::from_index({n}, std::move(labels));
}

DfpResult run_dfp(const Tensor& features, const ChannelReducer& reducer, const DfpConfig& cfg, DfpTrace* trace) {
  cfg.validate();
  require_rank(features, 3, "run_dfp features");
  require_f64(features, "run_dfp features");
  const std::size_t h = features.dim(0), w = features.dim(1), c = features.dim(2);
  const std::size_t m = cfg.regions;
  grid_factorization(m, h, w);

  Tensor augmented = cfg.use_coords ? append_coords(features, coord_scale_for(cfg, h, w)) : features;
  augmented = std::move(augmented).reshaped({h * w, augmented.dim(2)});
  Tensor reduced = reduce_channels(augmented, reducer);

  DfpTrace local;
  DfpTrace& t = trace ? *trace : local;
  t = DfpTrace{h, w, c, augmented, reduced, {}, {}};

  DfpResult result;
  if (cfg.mode == PartitionMode::kRegularGrid) {
    result.labels = grid_labels(h, w, m);
    Tensor onehot({h * w, m});
    auto lv = result.labels.idx();
    for (std::size_t i = 0; i < h * w; ++i) onehot(i, lv[i] - 1) = 1.0;
    result.centers = weighted_region_mean(onehot, reduced, cfg.epsilon);
    result.assoc = onehot;
    t.assoc = {std::move(onehot)};
    return result;
  }

  t.centers.push_back(init_centers_grid(reduced.reshaped({h, w, reduced.dim(1)}), m));
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    t.assoc.push_back(association(reduced, t.centers.back()));
    t.centers.push_back(update_centers(t.assoc.back(), reduced, cfg.epsilon));
  }
  t.assoc.push_back(association(reduced, t.centers.back()));

  result.assoc = t.assoc.back();
  result.centers = t.centers.back();
  result.labels = hard_assign(result.assoc).reshaped({h, w});
  return result;
}

DfpGrad run_dfp_vjp(const DfpTrace& trace, const ChannelReducer& reducer, const DfpConfig& cfg, const Tensor& d_assoc,
                    const Tensor& d_centers) {
  const Tensor& reduced = trace.reduced;
  Tensor d_reduced(reduced.shape());

  if (cfg.mode == PartitionMode::kRegularGrid) {
    if (!d_centers.empty()) {
      d_reduced = weighted_region_mean_vjp(trace.assoc.front(), reduced, cfg.epsilon, d_centers).features;
    }
  } else {
    const std::size_t iters = trace.assoc.size() - 1;
    Tensor d_center = d_centers.empty() ? Tensor(trace.centers.back().shape()) : d_centers;
    {
      auto g = association_vjp(reduced, trace.centers[iters], trace.assoc[iters], d_assoc);
      axpy(d_reduced, 1.0, g.features);
      axpy(d_center, 1.0, g.centers);
    }
    const std::size_t unroll =
        cfg.backward_iterations == 0 ? iters : std::min(cfg.backward_iterations, iters);
    for (std::size_t step = 0; step < unroll; ++step) {
      const std::size_t t = iters - 1 - step;
      auto gu = weighted_region_mean_vjp(trace.assoc[t], reduced, cfg.epsilon, d_center);
      axpy(d_reduced, 1.0, gu.features);
      auto ga = association_vjp(reduced, trace.centers[t], trace.assoc[t], gu.assoc);
      axpy(d_reduced, 1.0, ga.features);
      d_center = std::move(ga.centers);
    }
    if (unroll == iters) {
      const Shape map_shape{trace.h, trace.w, reduced.dim(1)};
      axpy(d_reduced, 1.0, init_centers_grid_vjp(map_shape, cfg.regions, d_center).reshaped(reduced.shape()));
    }
  }

  auto g = reduce_channels_vjp(trace.augmented, reducer, d_reduced);
  // Coordinate channels are constants; keep only the original feature channels.
  const std::size_t n = trace.h * trace.w, c = trace.c, c_aug = trace.augmented.dim(1);
  Tensor d_features({trace.h, trace.w, c});
  auto src = g.input.f64();
  auto dst = d_features.f64();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) dst[i * c + k] = src[i * c_aug + k];
  return {std::move(d_features), std::move(g.weight), std::move(g.bias)};
}

}  // namespace hrgr
