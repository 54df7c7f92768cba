#include "hrgr/graph.hpp"

#include <algorithm>
#include <array>
#include <thread>

namespace hrgr {

std::size_t StackedIndexVolume::layer_of(std::uint32_t label) const {
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
    if (label > offsets[i] && label <= offsets[i + 1]) return i;
  }
  throw ValidationError("label " + std::to_string(label) + " outside every layer range");
}

StackedIndexVolume stack_index_maps(std::span<const Tensor> maps, std::span<const std::size_t> region_counts) {
  if (maps.empty()) throw ValidationError("stack_index_maps: need at least one layer");
  if (maps.size() != region_counts.size()) {
    throw ValidationError("stack_index_maps: " + std::to_string(maps.size()) + " maps but " +
                          std::to_string(region_counts.size()) + " region counts");
  }
  std::size_t finest = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    require_rank(maps[i], 2, "stack_index_maps map");
    if (maps[i].dtype() != DType::kIndex) throw ValidationError("stack_index_maps: maps must be index tensors");
    if (maps[i].numel() > maps[finest].numel()) finest = i;
  }
  const std::size_t h = maps[finest].dim(0), w = maps[finest].dim(1), k = maps.size();

  StackedIndexVolume out{Tensor({h, w, k}, DType::kIndex), {0}};
  auto vol = out.volume.idx();
  for (std::size_t i = 0; i < k; ++i) {
    const auto m = region_counts[i];
    for (auto label : maps[i].idx()) {
      if (label > m) {
        throw ValidationError("stack_index_maps: layer " + std::to_string(i) + " has label " +
                              std::to_string(label) + " but only " + std::to_string(m) + " regions");
      }
    }
    const Tensor resized = resize_nearest_index(maps[i], h, w);
    const auto offset = static_cast<std::uint32_t>(out.offsets.back());
    auto src = resized.idx();
    for (std::size_t p = 0; p < h * w; ++p) vol[p * k + i] = src[p] + offset;
    out.offsets.push_back(out.offsets.back() + m);
  }
  return out;
}

// ---- AdjacencyMatrix --------------------------------------------------------------

AdjacencyMatrix AdjacencyMatrix::fully_connected(std::size_t order) {
  AdjacencyMatrix a(order);
  std::fill(a.cells_.begin(), a.cells_.end(), 1);
  return a;
}

AdjacencyMatrix AdjacencyMatrix::identity(std::size_t order) {
  AdjacencyMatrix a(order);
  a.add_self_loops();
  return a;
}

AdjacencyMatrix AdjacencyMatrix::from_tensor(const Tensor& t) {
  require_rank(t, 2, "adjacency");
  if (t.dim(0) != t.dim(1)) throw ShapeError("adjacency must be square, got " + to_string(t.shape()));
  const Tensor values = t.to_f64();
  AdjacencyMatrix a(t.dim(0));
  auto v = values.f64();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0 && v[i] != 1.0) throw ValidationError("adjacency entries must be 0 or 1");
    a.cells_[i] = v[i] != 0.0;
  }
  return a;
}

void AdjacencyMatrix::add_self_loops() {
  for (std::size_t u = 0; u < order_; ++u) cells_[u * order_ + u] = 1;
}

std::size_t AdjacencyMatrix::row_degree(std::size_t u) const {
  return static_cast<std::size_t>(std::count(cells_.begin() + static_cast<std::ptrdiff_t>(u * order_),
                                             cells_.begin() + static_cast<std::ptrdiff_t>((u + 1) * order_), 1));
}

std::size_t AdjacencyMatrix::edge_count() const {
  std::size_t n = 0;
  for (std::size_t u = 0; u < order_; ++u)
    for (std::size_t v = u + 1; v < order_; ++v) n += (*this)(u, v);
  return n;
}

Tensor AdjacencyMatrix::to_tensor() const {
  std::vector<double> v(cells_.begin(), cells_.end());
  return Tensor({order_, order_}, std::move(v));
}

Tensor AdjacencyMatrix::edge_list() const {
  std::vector<std::uint32_t> pairs;
  for (std::size_t u = 0; u < order_; ++u) {
    for (std::size_t v = u + 1; v < order_; ++v) {
      if ((*this)(u, v)) {
        pairs.push_back(static_cast<std::uint32_t>(u + 1));
        pairs.push_back(static_cast<std::uint32_t>(v + 1));
      }
    }
  }
  if (pairs.empty()) throw ValidationError("adjacency has no edges to export");
  const std::size_t e = pairs.size() / 2;
  return Tensor::from_index({e, 2}, std::move(pairs));
}

// ---- construction -----------------------------------------------------------------

AdjacencyMatrix build_adjacency_oracle(const StackedIndexVolume& stacked, const AdjacencyOptions& options) {
  const auto h = static_cast<long>(stacked.height());
  const auto w = static_cast<long>(stacked.width());
  const auto k = static_cast<long>(stacked.layers());
  const long depth = options.hierarchy == Hierarchy::kInterLayer ? 1 : 0;
  auto vol = stacked.volume.idx();
  AdjacencyMatrix a(stacked.node_count());
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      for (long z = 0; z < k; ++z) {
        const auto center = vol[static_cast<std::size_t>((y * w + x) * k + z)];
        for (long dy = -1; dy <= 1; ++dy) {
          for (long dx = -1; dx <= 1; ++dx) {
            for (long dz = -depth; dz <= depth; ++dz) {
              if (dy == 0 && dx == 0 && dz == 0) continue;
              const long ny = y + dy, nx = x + dx, nz = z + dz;
              if (ny < 0 || ny >= h || nx < 0 || nx >= w || nz < 0 || nz >= k) continue;
              const auto other = vol[static_cast<std::size_t>((ny * w + nx) * k + nz)];
              if (other != center) a.connect(center - 1, other - 1);
            }
          }
        }
      }
    }
  }
  if (options.self_loops) a.add_self_loops();
  return a;
}

namespace {

struct Offset {
  long dy, dx, dz;
};

// Lexicographically positive half of the 26 window offsets; the other half
// visits the same unordered pairs from the opposite end.
std::vector<Offset> forward_offsets(bool inter_layer) {
  std::vector<Offset> out;
  const long depth = inter_layer ? 1 : 0;
  for (long dy = -1; dy <= 1; ++dy)
    for (long dx = -1; dx <= 1; ++dx)
      for (long dz = -depth; dz <= depth; ++dz) {
        const bool positive = dy > 0 || (dy == 0 && (dx > 0 || (dx == 0 && dz > 0)));
        if (positive) out.push_back({dy, dx, dz});
      }
  return out;
}

// Upper-triangle pair set: one bit per unordered pair u < v.
class Bitset {
 public:
  explicit Bitset(std::size_t order) : order_(order), words_((order * order + 63) / 64, 0) {}
  void set_pair(std::size_t u, std::size_t v) {
    const std::size_t bit = u < v ? u * order_ + v : v * order_ + u;
    words_[bit >> 6] |= std::uint64_t{1} << (bit & 63);
  }
  void merge(const Bitset& other) {
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
  }
  bool test(std::size_t bit) const { return (words_[bit >> 6] >> (bit & 63)) & 1u; }

 private:
  std::size_t order_;
  std::vector<std::uint64_t> words_;
};

void scan_rows(const StackedIndexVolume& stacked, std::span<const Offset> offsets, long y_begin, long y_end,
               Bitset& bits) {
  const auto h = static_cast<long>(stacked.height());
  const auto w = static_cast<long>(stacked.width());
  const auto k = static_cast<long>(stacked.layers());
  const std::uint32_t* vol = stacked.volume.idx().data();

  // Offsets valid for each z, as linear deltas, for interior columns and rows.
  std::vector<std::vector<long>> deltas(static_cast<std::size_t>(k));
  for (long z = 0; z < k; ++z)
    for (const auto& o : offsets)
      if (z + o.dz >= 0 && z + o.dz < k) deltas[static_cast<std::size_t>(z)].push_back((o.dy * w + o.dx) * k + o.dz);

  auto edge_cell = [&](long y, long x) {
    const std::uint32_t* cell = vol + (y * w + x) * k;
    for (long z = 0; z < k; ++z) {
      for (const auto& o : offsets) {
        const long ny = y + o.dy, nx = x + o.dx, nz = z + o.dz;
        if (ny >= h || nx < 0 || nx >= w || nz < 0 || nz >= k) continue;
        const std::uint32_t other = vol[(ny * w + nx) * k + nz];
        if (other != cell[z]) bits.set_pair(cell[z] - 1, other - 1);
      }
    }
  };

  for (long y = y_begin; y < y_end; ++y) {
    if (y + 1 >= h || w < 3) {
      for (long x = 0; x < w; ++x) edge_cell(y, x);
      continue;
    }
    edge_cell(y, 0);
    for (long x = 1; x + 1 < w; ++x) {
      const std::uint32_t* cell = vol + (y * w + x) * k;
      for (long z = 0; z < k; ++z) {
        const std::uint32_t center = cell[z];
        for (const long d : deltas[static_cast<std::size_t>(z)]) {
          const std::uint32_t other = cell[z + d];
          if (other != center) bits.set_pair(center - 1, other - 1);
        }
      }
    }
    edge_cell(y, w - 1);
  }
}

}  // namespace

AdjacencyMatrix build_adjacency_parallel(const StackedIndexVolume& stacked, std::size_t threads,
                                         const AdjacencyOptions& options) {
  if (threads < 1) throw ValidationError("build_adjacency_parallel: threads must be >= 1");
  const std::size_t order = stacked.node_count();
  const auto offsets = forward_offsets(options.hierarchy == Hierarchy::kInterLayer);
  const auto h = static_cast<long>(stacked.height());
  const std::size_t workers = std::min<std::size_t>(threads, stacked.height());

  std::vector<Bitset> partial(workers, Bitset(order));
  auto rows_of = [&](std::size_t t) {
    return std::pair<long, long>{static_cast<long>(t) * h / static_cast<long>(workers),
                                 static_cast<long>(t + 1) * h / static_cast<long>(workers)};
  };
  if (workers == 1) {
    scan_rows(stacked, offsets, 0, h, partial[0]);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        const auto [y0, y1] = rows_of(t);
        scan_rows(stacked, offsets, y0, y1, partial[t]);
      });
    }
  }
  for (std::size_t t = 1; t < workers; ++t) partial[0].merge(partial[t]);

  AdjacencyMatrix a(order);
  for (std::size_t u = 0; u < order; ++u)
    for (std::size_t v = u + 1; v < order; ++v)
      if (partial[0].test(u * order + v)) a.connect(u, v);
  if (options.self_loops) a.add_self_loops();
  return a;
}

// ---- projection ---------------------------------------------------------------------

namespace {

void check_projection(std::span<const Tensor> nodes, std::span<const Tensor> weights) {
  if (nodes.empty() || nodes.size() != weights.size()) {
    throw ShapeError("project_nodes: " + std::to_string(nodes.size()) + " node matrices vs " +
                     std::to_string(weights.size()) + " weights");
  }
  const std::size_t width = weights[0].dim(1);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    require_rank(nodes[i], 2, "project_nodes nodes");
    require_rank(weights[i], 2, "project_nodes weight");
    if (nodes[i].dim(1) != weights[i].dim(0) || weights[i].dim(1) != width) {
      throw ShapeError("project_nodes: layer " + std::to_string(i) + " nodes " + to_string(nodes[i].shape()) +
                       " with weight " + to_string(weights[i].shape()));
    }
  }
}

}  // namespace

Tensor project_nodes(std::span<const Tensor> nodes, std::span<const Tensor> weights) {
  check_projection(nodes, weights);
  std::vector<Tensor> parts;
  parts.reserve(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) parts.push_back(matmul(nodes[i], weights[i]));
  return vstack(parts);
}

ProjectGrad project_nodes_vjp(std::span<const Tensor> nodes, std::span<const Tensor> weights,
                              const Tensor& cotangent) {
  check_projection(nodes, weights);
  ProjectGrad grad;
  std::size_t row = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Tensor slice = row_slice(cotangent, row, row + nodes[i].dim(0));
    grad.nodes.push_back(matmul_nt(slice, weights[i]));
    grad.weights.push_back(matmul_tn(nodes[i], slice));
    row += nodes[i].dim(0);
  }
  if (row != cotangent.dim(0)) throw ShapeError("project_nodes_vjp: cotangent rows " + to_string(cotangent.shape()));
  return grad;
}

}  // namespace hrgr
