#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "hrgr/dfp.hpp"
#include "hrgr/tensor.hpp"

namespace hrgr {

// Node representation of one layer: the D-weighted mean of the original
// (unreduced) features. n x m association, n x c features -> m x c.
inline Tensor aggregate_nodes(const Tensor& assoc, const Tensor& features, double epsilon) {
  return weighted_region_mean(assoc, features, epsilon);
}

// Index maps of all layers resized to a common resolution and stacked along
// a trailing layer axis, with labels shifted into disjoint global ranges.
struct StackedIndexVolume {
  Tensor volume;                     // h x w x k, global 1-based labels
  std::vector<std::size_t> offsets;  // k + 1 entries; layer i owns (offsets[i], offsets[i + 1]]

  std::size_t height() const { return volume.dim(0); }
  std::size_t width() const { return volume.dim(1); }
  std::size_t layers() const { return volume.dim(2); }
  std::size_t node_count() const { return offsets.back(); }
  // 0-based layer owning a 1-based global label.
  std::size_t layer_of(std::uint32_t label) const;
};

// maps[i] is an h_i x w_i index map with labels in 1..region_counts[i].
// Every map is resized (nearest) to the finest layer's resolution.
StackedIndexVolume stack_index_maps(std::span<const Tensor> maps, std::span<const std::size_t> region_counts);

enum class Hierarchy { kInterLayer, kIntraLayer };

struct AdjacencyOptions {
  bool self_loops = true;
  // kIntraLayer restricts the window to depth 1 (no cross-layer edges).
  Hierarchy hierarchy = Hierarchy::kInterLayer;
};

// Dense binary M x M node adjacency; indices here are 0-based node ids.
class AdjacencyMatrix {
 public:
  AdjacencyMatrix() = default;
  explicit AdjacencyMatrix(std::size_t order) : order_(order), cells_(order * order, 0) {}

  static AdjacencyMatrix fully_connected(std::size_t order);
  static AdjacencyMatrix identity(std::size_t order);
  // Accepts a 0/1 float64 M x M tensor.
  static AdjacencyMatrix from_tensor(const Tensor& t);

  std::size_t order() const { return order_; }
  bool operator()(std::size_t u, std::size_t v) const { return cells_[u * order_ + v] != 0; }
  void connect(std::size_t u, std::size_t v) {
    cells_[u * order_ + v] = 1;
    cells_[v * order_ + u] = 1;
  }
  void add_self_loops();
  std::size_t row_degree(std::size_t u) const;
  std::size_t edge_count() const;  // unordered pairs u < v

  // float64 0/1 matrix, the form message passing consumes.
  Tensor to_tensor() const;
  // E x 2 index tensor of 1-based node pairs (u < v), row-major order.
  Tensor edge_list() const;

  std::span<const std::uint8_t> cells() const { return cells_; }
  bool operator==(const AdjacencyMatrix& other) const = default;

 private:
  std::size_t order_ = 0;
  std::vector<std::uint8_t> cells_;
};

// Reference construction: every position, every in-bounds offset of the
// 3x3x3 window, both directions written, diagonal set last.
AdjacencyMatrix build_adjacency_oracle(const StackedIndexVolume& stacked, const AdjacencyOptions& options = {});

// Same output, bit for bit, for any thread count. Rows are split across
// workers that each fill a private bitset over the 13 forward window offsets;
// the bitsets are OR-merged in worker order.
AdjacencyMatrix build_adjacency_parallel(const StackedIndexVolume& stacked, std::size_t threads,
                                         const AdjacencyOptions& options = {});

// Uniform channel projection: concat(R^1 W^1; ...; R^k W^k) -> M x C.
Tensor project_nodes(std::span<const Tensor> nodes, std::span<const Tensor> weights);

struct ProjectGrad {
  std::vector<Tensor> nodes;
  std::vector<Tensor> weights;
};
ProjectGrad project_nodes_vjp(std::span<const Tensor> nodes, std::span<const Tensor> weights,
                              const Tensor& cotangent);

}  // namespace hrgr
