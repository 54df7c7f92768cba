#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <vector>

#include "hrgr/tensor.hpp"

namespace hrgr {

// Differentiable feature partition: soft clustering of feature elements
// into m content-coherent regions.

enum class PartitionMode { kSoftDfp, kRegularGrid };

struct DfpConfig {
  std::size_t regions = 64;
  std::size_t iterations = 5;
  // Multiplier on [0,1]-normalised coordinates; unset means sqrt(m / (h * w)).
  std::optional<double> coord_scale;
  bool use_coords = true;
  PartitionMode mode = PartitionMode::kSoftDfp;
  double epsilon = 1e-8;
  // Number of clustering iterations the backward pass unrolls; 0 unrolls all.
  std::size_t backward_iterations = 0;

  void validate() const;
};

// Pointwise affine map followed by GeLU, reducing c' channels to c''.
struct ChannelReducer {
  Tensor weight;  // c' x c''
  Tensor bias;    // c''

  std::size_t in_channels() const { return weight.dim(0); }
  std::size_t out_channels() const { return weight.dim(1); }

  // weight ~ U(-1/sqrt(c'), 1/sqrt(c')), bias 0. Requires c'' < c'.
  static ChannelReducer init(std::size_t in_channels, std::size_t out_channels, std::mt19937_64& rng);
  // Keeps the first c'' input channels unchanged (then GeLU), drops the rest.
  static ChannelReducer truncation(std::size_t in_channels, std::size_t out_channels);
};

struct ReducerGrad {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

struct GridLayout {
  std::size_t rows = 1;
  std::size_t cols = 1;
};

struct CoordScale {
  double x = 1.0;
  double y = 1.0;
};

// Divisor pair rows * cols = m closest to the map's aspect ratio. Throws
// ValidationError when m exceeds h * w or no pair fits inside the map.
GridLayout grid_factorization(std::size_t m, std::size_t h, std::size_t w);

// Per-axis multipliers that turn integer (x, y) into the normalised, scaled
// coordinates run_dfp appends.
CoordScale coord_scale_for(const DfpConfig& cfg, std::size_t h, std::size_t w);

// h x w x c -> h x w x (c + 2); the new channels hold scale * x, scale * y.
Tensor append_coords(const Tensor& features, double scale);
Tensor append_coords(const Tensor& features, CoordScale scale);

// Works on the trailing channel axis of a rank-2 or rank-3 tensor.
Tensor reduce_channels(const Tensor& features, const ChannelReducer& reducer);
ReducerGrad reduce_channels_vjp(const Tensor& features, const ChannelReducer& reducer, const Tensor& cotangent);

// Means of the g_h x g_w grid cells of an h x w x c map, row-major cell order.
Tensor init_centers_grid(const Tensor& reduced, std::size_t m);
Tensor init_centers_grid_vjp(const Shape& reduced_shape, std::size_t m, const Tensor& cotangent);
// 1-based grid cell of each element, h x w.
Tensor grid_labels(std::size_t h, std::size_t w, std::size_t m);

// D(i, j) = softmax_j(-sharpness * |e_i - r_j|^2) for n x c features and m x c centers.
Tensor association(const Tensor& features, const Tensor& centers, double sharpness = 1.0);

struct AssociationGrad {
  Tensor features;
  Tensor centers;
};
AssociationGrad association_vjp(const Tensor& features, const Tensor& centers, const Tensor& assoc,
                                const Tensor& cotangent, double sharpness = 1.0);

// (1 / max(N_D, eps)) o (D^T F): the D-weighted mean of F per column of D.
// Columns with mass below eps divide by eps instead (empty soft regions).
Tensor weighted_region_mean(const Tensor& assoc, const Tensor& features, double epsilon);

struct WeightedMeanGrad {
  Tensor assoc;
  Tensor features;
};
WeightedMeanGrad weighted_region_mean_vjp(const Tensor& assoc, const Tensor& features, double epsilon,
                                          const Tensor& cotangent);

inline Tensor update_centers(const Tensor& assoc, const Tensor& reduced, double epsilon) {
  return weighted_region_mean(assoc, reduced, epsilon);
}

// argmax per row, 1-based, ties to the lowest column.
Tensor hard_assign(const Tensor& assoc);

struct DfpResult {
  Tensor assoc;    // n x m
  Tensor centers;  // m x c''
  Tensor labels;   // h x w, index
};

// Forward intermediates kept for the backward pass.
struct DfpTrace {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;
  Tensor augmented;    // n x c'
  Tensor reduced;      // n x c''
  std::vector<Tensor> centers;  // C_0 .. C_T
  std::vector<Tensor> assoc;    // D_0 .. D_T; D_T is the returned matrix
};

DfpResult run_dfp(const Tensor& features, const ChannelReducer& reducer, const DfpConfig& cfg,
                  DfpTrace* trace = nullptr);

struct DfpGrad {
  Tensor features;  // h x w x c
  Tensor weight;
  Tensor bias;
};

// Cotangents for the returned D and centers; an empty d_centers means zero.
DfpGrad run_dfp_vjp(const DfpTrace& trace, const ChannelReducer& reducer, const DfpConfig& cfg, const Tensor& d_assoc,
                    const Tensor& d_centers);

}  // namespace hrgr
