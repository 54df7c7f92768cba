#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hrgr/dfp.hpp"
#include "hrgr/graph.hpp"
#include "hrgr/tensor.hpp"

namespace hrgr {

// ---- graph reasoning primitives -------------------------------------------------

// ((1 / N_A) o (A R_G)) W_G. Throws NumericalError on a node with no neighbours.
Tensor message_pass(const Tensor& nodes, const AdjacencyMatrix& adjacency, const Tensor& weight);

struct MessagePassGrad {
  Tensor nodes;
  Tensor weight;
};
MessagePassGrad message_pass_vjp(const Tensor& nodes, const AdjacencyMatrix& adjacency, const Tensor& weight,
                                 const Tensor& cotangent);

// GeLU(R W_alpha) W_beta + R.
Tensor regularize(const Tensor& nodes, const Tensor& alpha, const Tensor& beta);

struct RegularizeGrad {
  Tensor nodes;
  Tensor alpha;
  Tensor beta;
};
RegularizeGrad regularize_vjp(const Tensor& nodes, const Tensor& alpha, const Tensor& beta, const Tensor& cotangent);

// D_i (R_G[begin:end] W_inv): node values distributed back to the n_i elements.
Tensor remap(const Tensor& graph_nodes, std::size_t begin, std::size_t end, const Tensor& assoc,
             const Tensor& inverse_weight);

struct RemapGrad {
  Tensor graph_nodes;  // full M x C, zero outside [begin, end)
  Tensor assoc;
  Tensor inverse_weight;
};
RemapGrad remap_vjp(const Tensor& graph_nodes, std::size_t begin, std::size_t end, const Tensor& assoc,
                    const Tensor& inverse_weight, const Tensor& cotangent);

// mu * reshape(F_G) + f for an h x w x c map f and an n x c F_G.
Tensor fuse(const Tensor& features, const Tensor& remapped, double mu);

struct FuseGrad {
  Tensor features;
  Tensor remapped;
  double mu = 0.0;
};
FuseGrad fuse_vjp(const Tensor& remapped, double mu, const Tensor& cotangent);

// ---- the block --------------------------------------------------------------------

struct HrgrParams {
  std::vector<ChannelReducer> reducers;  // one per layer
  std::vector<Tensor> project;           // W^i: c_i x C
  Tensor graph_weight;                   // W_G: C x C
  Tensor alpha;                          // W_alpha: C x C
  Tensor beta;                           // W_beta: C x C
  std::vector<Tensor> inverse;           // W_inv^i: C x c_i
  Tensor mu;                             // k, one fusion weight per layer

  std::size_t layers() const { return project.size(); }
  std::size_t width() const { return graph_weight.dim(0); }
  std::vector<std::size_t> layer_channels() const;
  std::vector<std::size_t> reduced_channels() const;

  // Matrices ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, mu = 1.
  // reduced[i] must be < channels[i] + 2 (or + 0 without coordinates).
  static HrgrParams init(std::span<const std::size_t> channels, std::span<const std::size_t> reduced,
                         std::size_t width, std::mt19937_64& rng, bool use_coords = true);
  HrgrParams zeros_like() const;

  // Stable (name, tensor) view used by serialization, optimizers and checks.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
};

enum class GraphMode { kFull, kGrid, kIntra, kFullyConnected };

GraphMode parse_graph_mode(const std::string& name);
std::string to_string(GraphMode mode);

struct HrgrConfig {
  DfpConfig dfp;
  // Per-layer region counts; empty means dfp.regions for every layer.
  std::vector<std::size_t> regions;
  std::size_t rounds = 1;
  bool self_loops = true;
  Hierarchy hierarchy = Hierarchy::kInterLayer;
  bool fully_connected = false;
  std::size_t threads = 1;

  DfpConfig layer_dfp(std::size_t layer) const;
  void apply(GraphMode mode);
};

struct HrgrOutput {
  std::vector<Tensor> features;
  std::vector<Tensor> labels;  // per-layer h_i x w_i index maps
  StackedIndexVolume stacked;
  AdjacencyMatrix adjacency;
};

struct HrgrTrace {
  std::vector<DfpTrace> dfp;
  std::vector<Tensor> assoc;   // D_i
  std::vector<Tensor> rows;    // f_i as n_i x c_i
  std::vector<Tensor> nodes;   // R^i
  std::vector<std::size_t> offsets;
  AdjacencyMatrix adjacency;
  std::vector<Tensor> round_inputs;  // R_G entering each round
  std::vector<Tensor> smoothed;      // hat R_G of each round
  Tensor graph_out;                  // R_G after the last round
  std::vector<Tensor> remapped;      // F_G^i
};

HrgrOutput hrgr_block(std::span<const Tensor> features, const HrgrParams& params, const HrgrConfig& cfg,
                      HrgrTrace* trace = nullptr);

struct HrgrGrad {
  std::vector<Tensor> features;
  HrgrParams params;
};

// Reverse pass over a recorded forward, one cotangent per output map.
HrgrGrad hrgr_block_vjp(const HrgrTrace& trace, const HrgrParams& params, const HrgrConfig& cfg,
                        std::span<const Tensor> cotangents);

}  // namespace hrgr
