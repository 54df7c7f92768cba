#include "hrgr/reasoning.hpp"

#include <cmath>

namespace hrgr {

// ---- message passing ------------------------------------------------------------

namespace {

void check_graph_args(const Tensor& nodes, const AdjacencyMatrix& adjacency, const Tensor& weight) {
  require_rank(nodes, 2, "message_pass nodes");
  require_f64(nodes, "message_pass nodes");
  if (nodes.dim(0) != adjacency.order()) {
    throw ShapeError("message_pass: " + std::to_string(nodes.dim(0)) + " nodes but adjacency of order " +
                     std::to_string(adjacency.order()));
  }
  require_shape(weight, {nodes.dim(1), nodes.dim(1)}, "message_pass W_G");
}

std::vector<double> degrees(const AdjacencyMatrix& adjacency) {
  std::vector<double> deg(adjacency.order());
  for (std::size_t u = 0; u < adjacency.order(); ++u) {
    deg[u] = static_cast<double>(adjacency.row_degree(u));
    if (deg[u] == 0.0) {
      throw NumericalError("message_pass: node " + std::to_string(u + 1) +
                           " has no neighbours (enable self-loops)");
    }
  }
  return deg;
}

// (1 / N_A) o (A X), or its transpose A^T (X / N_A) when `transposed`.
Tensor neighbour_mean(const AdjacencyMatrix& adjacency, const Tensor& x, const std::vector<double>& deg,
                      bool transposed) {
  const std::size_t order = adjacency.order(), c = x.dim(1);
  Tensor out({order, c});
  auto xv = x.f64();
  auto ov = out.f64();
  for (std::size_t u = 0; u < order; ++u) {
    for (std::size_t v = 0; v < order; ++v) {
      const bool linked = transposed ? adjacency(v, u) : adjacency(u, v);
      if (!linked) continue;
      const double weight = transposed ? 1.0 / deg[v] : 1.0;
      for (std::size_t k = 0; k < c; ++k) ov[u * c + k] += weight * xv[v * c + k];
    }
    if (!transposed) {
      for (std::size_t k = 0; k < c; ++k) ov[u * c + k] /= deg[u];
    }
  }
  return out;
}

}  // namespace

Tensor message_pass(const Tensor& nodes, const AdjacencyMatrix& adjacency, const Tensor& weight) {
  check_graph_args(nodes, adjacency, weight);
  return matmul(neighbour_mean(adjacency, nodes, degrees(adjacency), false), weight);
}

MessagePassGrad message_pass_vjp(const Tensor& nodes, const AdjacencyMatrix& adjacency, const Tensor& weight,
                                 const Tensor& cotangent) {
  check_graph_args(nodes, adjacency, weight);
  require_shape(cotangent, nodes.shape(), "message_pass cotangent");
  const auto deg = degrees(adjacency);
  const Tensor mean = neighbour_mean(adjacency, nodes, deg, false);
  const Tensor d_mean = matmul_nt(cotangent, weight);
  return {neighbour_mean(adjacency, d_mean, deg, true), matmul_tn(mean, cotangent)};
}

Tensor regularize(const Tensor& nodes, const Tensor& alpha, const Tensor& beta) {
  require_rank(nodes, 2, "regularize nodes");
  const std::size_t c = nodes.dim(1);
  require_shape(alpha, {c, c}, "regularize W_alpha");
  require_shape(beta, {c, c}, "regularize W_beta");
  return add(matmul(gelu(matmul(nodes, alpha)), beta), nodes);
}

RegularizeGrad regularize_vjp(const Tensor& nodes, const Tensor& alpha, const Tensor& beta, const Tensor& cotangent) {
  require_rank(nodes, 2, "regularize nodes");
  const std::size_t c = nodes.dim(1);
  require_shape(alpha, {c, c}, "regularize W_alpha");
  require_shape(beta, {c, c}, "regularize W_beta");
  require_shape(cotangent, nodes.shape(), "regularize cotangent");
  const Tensor pre = matmul(nodes, alpha);
  const Tensor act = gelu(pre);
  Tensor d_pre = matmul_nt(cotangent, beta);
  auto dp = d_pre.f64();
  auto pv = pre.f64();
  for (std::size_t i = 0; i < dp.size(); ++i) dp[i] *= gelu_grad(pv[i]);
  return {add(cotangent, matmul_nt(d_pre, alpha)), matmul_tn(nodes, d_pre), matmul_tn(act, cotangent)};
}

namespace {

void check_remap(const Tensor& graph_nodes, std::size_t begin, std::size_t end, const Tensor& assoc,
                 const Tensor& inverse_weight) {
  require_rank(graph_nodes, 2, "remap graph nodes");
  require_rank(assoc, 2, "remap association");
  require_rank(inverse_weight, 2, "remap W_inv");
  if (begin >= end || end > graph_nodes.dim(0)) {
    throw ShapeError("remap: layer range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside " + std::to_string(graph_nodes.dim(0)) + " nodes");
  }
  if (assoc.dim(1) != end - begin) {
    throw ShapeError("remap: association " + to_string(assoc.shape()) + " does not cover " +
                     std::to_string(end - begin) + " layer nodes");
  }
  if (inverse_weight.dim(0) != graph_nodes.dim(1)) {
    throw ShapeError("remap: W_inv " + to_string(inverse_weight.shape()) + " against node width " +
                     std::to_string(graph_nodes.dim(1)));
  }
}

}  // namespace

Tensor remap(const Tensor& graph_nodes, std::size_t begin, std::size_t end, const Tensor& assoc,
             const Tensor& inverse_weight) {
  check_remap(graph_nodes, begin, end, assoc, inverse_weight);
  return matmul(assoc, matmul(row_slice(graph_nodes, begin, end), inverse_weight));
}

RemapGrad remap_vjp(const Tensor& graph_nodes, std::size_t begin, std::size_t end, const Tensor& assoc,
                    const Tensor& inverse_weight, const Tensor& cotangent) {
  check_remap(graph_nodes, begin, end, assoc, inverse_weight);
  require_shape(cotangent, {assoc.dim(0), inverse_weight.dim(1)}, "remap cotangent");
  const Tensor slice = row_slice(graph_nodes, begin, end);
  const Tensor layer_nodes = matmul(slice, inverse_weight);
  const Tensor d_layer = matmul_tn(assoc, cotangent);

  RemapGrad grad{Tensor(graph_nodes.shape()), matmul_nt(cotangent, layer_nodes), matmul_tn(slice, d_layer)};
  const Tensor d_slice = matmul_nt(d_layer, inverse_weight);
  auto dst = grad.graph_nodes.f64();
  auto src = d_slice.f64();
  std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(begin * graph_nodes.dim(1)));
  return grad;
}

Tensor fuse(const Tensor& features, const Tensor& remapped, double mu) {
  if (features.numel() != remapped.numel()) {
    throw ShapeError("fuse: features " + to_string(features.shape()) + " vs remapped " +
                     to_string(remapped.shape()));
  }
  Tensor out = features;
  auto o = out.f64();
  auto r = remapped.f64();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += mu * r[i];
  return out;
}

FuseGrad fuse_vjp(const Tensor& remapped, double mu, const Tensor& cotangent) {
  if (cotangent.numel() != remapped.numel()) {
    throw ShapeError("fuse_vjp: cotangent " + to_string(cotangent.shape()) + " vs remapped " +
                     to_string(remapped.shape()));
  }
  const Tensor flat = cotangent.reshaped(remapped.shape());
  return {cotangent, scale(flat, mu), dot(flat, remapped)};
}

// ---- parameters and config ----------------------------------------------------------

std::vector<std::size_t> HrgrParams::layer_channels() const {
  std::vector<std::size_t> out;
  for (const auto& w : project) out.push_back(w.dim(0));
  return out;
}

std::vector<std::size_t> HrgrParams::reduced_channels() const {
  std::vector<std::size_t> out;
  for (const auto& r : reducers) out.push_back(r.out_channels());
  return out;
}

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> uni(-bound, bound);
  Tensor t({rows, cols});
  for (auto& v : t.f64()) v = uni(rng);
  return t;
}

}  // namespace

HrgrParams HrgrParams::init(std::span<const std::size_t> channels, std::span<const std::size_t> reduced,
                            std::size_t width, std::mt19937_64& rng, bool use_coords) {
  if (channels.empty() || channels.size() != reduced.size()) {
    throw ValidationError("HrgrParams::init: need one reduced width per layer");
  }
  if (width == 0) throw ValidationError("HrgrParams::init: node width C must be >= 1");
  HrgrParams p;
  const std::size_t extra = use_coords ? 2 : 0;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    p.reducers.push_back(ChannelReducer::init(channels[i] + extra, reduced[i], rng));
  }
  for (auto c : channels) p.project.push_back(uniform_matrix(c, width, rng));
  p.graph_weight = uniform_matrix(width, width, rng);
  p.alpha = uniform_matrix(width, width, rng);
  p.beta = uniform_matrix(width, width, rng);
  for (auto c : channels) p.inverse.push_back(uniform_matrix(width, c, rng));
  p.mu = Tensor::filled({channels.size()}, 1.0);
  return p;
}

HrgrParams HrgrParams::zeros_like() const {
  HrgrParams z = *this;
  for (auto& [name, t] : z.named()) *t = Tensor(t->shape());
  return z;
}

std::vector<std::pair<std::string, Tensor*>> HrgrParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t i = 0; i < reducers.size(); ++i) {
    out.emplace_back("reducer" + std::to_string(i) + ".weight", &reducers[i].weight);
    out.emplace_back("reducer" + std::to_string(i) + ".bias", &reducers[i].bias);
  }
  for (std::size_t i = 0; i < project.size(); ++i) out.emplace_back("project" + std::to_string(i), &project[i]);
  out.emplace_back("graph_weight", &graph_weight);
  out.emplace_back("alpha", &alpha);
  out.emplace_back("beta", &beta);
  for (std::size_t i = 0; i < inverse.size(); ++i) out.emplace_back("inverse" + std::to_string(i), &inverse[i]);
  out.emplace_back("mu", &mu);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> HrgrParams::named() const {
  auto mutable_view = const_cast<HrgrParams*>(this)->named();
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : mutable_view) out.emplace_back(std::move(name), t);
  return out;
}

GraphMode parse_graph_mode(const std::string& name) {
  if (name == "full") return GraphMode::kFull;
  if (name == "grid") return GraphMode::kGrid;
  if (name == "intra") return GraphMode::kIntra;
  if (name == "fc") return GraphMode::kFullyConnected;
  throw ValidationError("unknown graph mode '" + name + "' (expected full|grid|intra|fc)");
}

std::string to_string(GraphMode mode) {
  switch (mode) {
    case GraphMode::kFull: return "full";
    case GraphMode::kGrid: return "grid";
    case GraphMode::kIntra: return "intra";
    case GraphMode::kFullyConnected: return "fc";
  }
  return "unknown";
}

DfpConfig HrgrConfig::layer_dfp(std::size_t layer) const {
  DfpConfig c = dfp;
  if (!regions.empty()) c.regions = regions.at(layer);
  return c;
}

void HrgrConfig::apply(GraphMode mode) {
  switch (mode) {
    case GraphMode::kFull: break;
    case GraphMode::kGrid: dfp.mode = PartitionMode::kRegularGrid; break;
    case GraphMode::kIntra: hierarchy = Hierarchy::kIntraLayer; break;
    case GraphMode::kFullyConnected: fully_connected = true; break;
  }
}

// ---- block ------------------------------------------------------------------------

HrgrOutput hrgr_block(std::span<const Tensor> features, const HrgrParams& params, const HrgrConfig& cfg,
                      HrgrTrace* trace) {
  const std::size_t k = features.size();
  if (k == 0) throw ValidationError("hrgr_block: need at least one feature layer");
  if (params.layers() != k || params.reducers.size() != k || params.inverse.size() != k || params.mu.numel() != k) {
    throw ValidationError("hrgr_block: parameters cover " + std::to_string(params.layers()) + " layers, got " +
                          std::to_string(k) + " feature maps");
  }
  if (!cfg.regions.empty() && cfg.regions.size() != k) {
    throw ValidationError("hrgr_block: " + std::to_string(cfg.regions.size()) + " region counts for " +
                          std::to_string(k) + " layers");
  }
  if (cfg.rounds < 1) throw ValidationError("hrgr_block: rounds must be >= 1");

  HrgrTrace local;
  HrgrTrace& t = trace ? *trace : local;
  t = HrgrTrace{};
  t.dfp.resize(k);

  HrgrOutput out;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < k; ++i) {
    require_rank(features[i], 3, "hrgr_block features");
    if (features[i].dim(2) != params.project[i].dim(0)) {
      throw ShapeError("hrgr_block: layer " + std::to_string(i) + " has " + std::to_string(features[i].dim(2)) +
                       " channels, W^" + std::to_string(i + 1) + " is " + to_string(params.project[i].shape()));
    }
    const DfpConfig layer_cfg = cfg.layer_dfp(i);
    DfpResult part = run_dfp(features[i], params.reducers[i], layer_cfg, &t.dfp[i]);
    Tensor rows = features[i].reshaped({features[i].dim(0) * features[i].dim(1), features[i].dim(2)});
    t.nodes.push_back(aggregate_nodes(part.assoc, rows, layer_cfg.epsilon));
    t.rows.push_back(std::move(rows));
    t.assoc.push_back(std::move(part.assoc));
    out.labels.push_back(std::move(part.labels));
    counts.push_back(layer_cfg.regions);
  }

  out.stacked = stack_index_maps(out.labels, counts);
  t.offsets = out.stacked.offsets;
  if (cfg.fully_connected) {
    t.adjacency = AdjacencyMatrix::fully_connected(out.stacked.node_count());
  } else {
    t.adjacency = build_adjacency_parallel(out.stacked, cfg.threads, {cfg.self_loops, cfg.hierarchy});
  }
  out.adjacency = t.adjacency;

  Tensor graph = project_nodes(t.nodes, params.project);
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    t.round_inputs.push_back(graph);
    t.smoothed.push_back(message_pass(graph, t.adjacency, params.graph_weight));
    graph = regularize(t.smoothed.back(), params.alpha, params.beta);
  }
  t.graph_out = graph;

  for (std::size_t i = 0; i < k; ++i) {
    t.remapped.push_back(remap(graph, t.offsets[i], t.offsets[i + 1], t.assoc[i], params.inverse[i]));
    out.features.push_back(fuse(features[i], t.remapped.back(), params.mu.f64()[i]));
  }
  return out;
}

HrgrGrad hrgr_block_vjp(const HrgrTrace& trace, const HrgrParams& params, const HrgrConfig& cfg,
                        std::span<const Tensor> cotangents) {
  const std::size_t k = trace.rows.size();
  if (cotangents.size() != k) throw ShapeError("hrgr_block_vjp: expected one cotangent per layer");
  HrgrGrad grad{{}, params.zeros_like()};
  std::vector<Tensor> d_assoc;
  Tensor d_graph(trace.graph_out.shape());

  for (std::size_t i = 0; i < k; ++i) {
    const auto fg = fuse_vjp(trace.remapped[i], params.mu.f64()[i], cotangents[i]);
    grad.features.push_back(fg.features);
    grad.params.mu.f64()[i] = fg.mu;
    auto rg = remap_vjp(trace.graph_out, trace.offsets[i], trace.offsets[i + 1], trace.assoc[i], params.inverse[i],
                        fg.remapped);
    axpy(d_graph, 1.0, rg.graph_nodes);
    d_assoc.push_back(std::move(rg.assoc));
    grad.params.inverse[i] = std::move(rg.inverse_weight);
  }

  for (std::size_t r = trace.smoothed.size(); r-- > 0;) {
    auto reg = regularize_vjp(trace.smoothed[r], params.alpha, params.beta, d_graph);
    axpy(grad.params.alpha, 1.0, reg.alpha);
    axpy(grad.params.beta, 1.0, reg.beta);
    auto mp = message_pass_vjp(trace.round_inputs[r], trace.adjacency, params.graph_weight, reg.nodes);
    axpy(grad.params.graph_weight, 1.0, mp.weight);
    d_graph = std::move(mp.nodes);
  }

  auto proj = project_nodes_vjp(trace.nodes, params.project, d_graph);
  for (std::size_t i = 0; i < k; ++i) {
    grad.params.project[i] = std::move(proj.weights[i]);
    const DfpConfig layer_cfg = cfg.layer_dfp(i);
    auto agg = weighted_region_mean_vjp(trace.assoc[i], trace.rows[i], layer_cfg.epsilon, proj.nodes[i]);
    axpy(d_assoc[i], 1.0, agg.assoc);
    axpy(grad.features[i], 1.0, agg.features.reshaped(grad.features[i].shape()));
    auto dg = run_dfp_vjp(trace.dfp[i], params.reducers[i], layer_cfg, d_assoc[i], Tensor{});
    axpy(grad.features[i], 1.0, dg.features);
    grad.params.reducers[i].weight = std::move(dg.weight);
    grad.params.reducers[i].bias = std::move(dg.bias);
  }
  return grad;
}

}  // namespace hrgr
