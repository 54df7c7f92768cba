#include "hrgr/ops.hpp"

#include <algorithm>
#include <random>

namespace hrgr {

namespace {

ChannelReducer reducer_of(const Tensor& weight, const Tensor& bias) { return {weight, bias}; }

}  // namespace

DiffOp reduce_channels_op() {
  return {"reduce_channels",
          {"features", "weight", "bias"},
          [](const Tensors& in) { return Tensors{reduce_channels(in[0], reducer_of(in[1], in[2]))}; },
          [](const Tensors& in, const Tensors&, const Tensors& cot) {
            auto g = reduce_channels_vjp(in[0], reducer_of(in[1], in[2]), cot[0]);
            return Tensors{g.input, g.weight, g.bias};
          }};
}

DiffOp init_centers_grid_op(std::size_t m) {
  return {"init_centers_grid",
          {"reduced"},
          [m](const Tensors& in) { return Tensors{init_centers_grid(in[0], m)}; },
          [m](const Tensors& in, const Tensors&, const Tensors& cot) {
            return Tensors{init_centers_grid_vjp(in[0].shape(), m, cot[0])};
          }};
}

DiffOp association_op() {
  return {"association",
          {"features", "centers"},
          [](const Tensors& in) { return Tensors{association(in[0], in[1])}; },
          [](const Tensors& in, const Tensors& out, const Tensors& cot) {
            auto g = association_vjp(in[0], in[1], out[0], cot[0]);
            return Tensors{g.features, g.centers};
          }};
}

DiffOp update_centers_op(double epsilon) {
  return {"update_centers",
          {"assoc", "reduced"},
          [epsilon](const Tensors& in) { return Tensors{update_centers(in[0], in[1], epsilon)}; },
          [epsilon](const Tensors& in, const Tensors&, const Tensors& cot) {
            auto g = weighted_region_mean_vjp(in[0], in[1], epsilon, cot[0]);
            return Tensors{g.assoc, g.features};
          }};
}

DiffOp run_dfp_op(const DfpConfig& cfg) {
  return {"run_dfp",
          {"features", "weight", "bias"},
          [cfg](const Tensors& in) {
            auto r = run_dfp(in[0], reducer_of(in[1], in[2]), cfg);
            return Tensors{r.assoc, r.centers, r.labels};
          },
          [cfg](const Tensors& in, const Tensors&, const Tensors& cot) {
            DfpTrace trace;
            const auto reducer = reducer_of(in[1], in[2]);
            run_dfp(in[0], reducer, cfg, &trace);
            auto g = run_dfp_vjp(trace, reducer, cfg, cot[0], cot[1]);
            return Tensors{g.features, g.weight, g.bias};
          }};
}

namespace {

Tensor rows_of(const Tensor& map) { return map.reshaped({map.dim(0) * map.dim(1), map.dim(2)}); }

}  // namespace

DiffOp aggregate_nodes_op(double epsilon) {
  return {"aggregate_nodes",
          {"assoc", "features"},
          [epsilon](const Tensors& in) { return Tensors{aggregate_nodes(in[0], rows_of(in[1]), epsilon)}; },
          [epsilon](const Tensors& in, const Tensors&, const Tensors& cot) {
            auto g = weighted_region_mean_vjp(in[0], rows_of(in[1]), epsilon, cot[0]);
            return Tensors{g.assoc, g.features.reshaped(in[1].shape())};
          }};
}

DiffOp project_nodes_op(std::size_t layers) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < layers; ++i) names.push_back("nodes" + std::to_string(i));
  for (std::size_t i = 0; i < layers; ++i) names.push_back("W" + std::to_string(i));
  return {"project_nodes", names,
          [layers](const Tensors& in) {
            return Tensors{project_nodes(std::span(in).first(layers), std::span(in).subspan(layers))};
          },
          [layers](const Tensors& in, const Tensors&, const Tensors& cot) {
            auto g = project_nodes_vjp(std::span(in).first(layers), std::span(in).subspan(layers), cot[0]);
            Tensors out = g.nodes;
            out.insert(out.end(), g.weights.begin(), g.weights.end());
            return out;
          }};
}

DiffOp adjacency_op(std::vector<std::size_t> regions, const HrgrConfig& cfg) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < regions.size(); ++i) names.push_back("labels" + std::to_string(i));
  return {"adjacency", names,
          [regions, cfg](const Tensors& in) {
            const auto stacked = stack_index_maps(in, regions);
            if (cfg.fully_connected) return Tensors{AdjacencyMatrix::fully_connected(stacked.node_count()).to_tensor()};
            return Tensors{
                build_adjacency_parallel(stacked, cfg.threads, {cfg.self_loops, cfg.hierarchy}).to_tensor()};
          },
          [](const Tensors& in, const Tensors&, const Tensors&) { return Tensors(in.size()); }};
}

DiffOp message_pass_op() {
  return {"message_pass",
          {"nodes", "adjacency", "W_G"},
          [](const Tensors& in) { return Tensors{message_pass(in[0], AdjacencyMatrix::from_tensor(in[1]), in[2])}; },
          [](const Tensors& in, const Tensors&, const Tensors& cot) {
            auto g = message_pass_vjp(in[0], AdjacencyMatrix::from_tensor(in[1]), in[2], cot[0]);
            return Tensors{g.nodes, Tensor{}, g.weight};
          }};
}

DiffOp regularize_op() {
  return {"regularize",
          {"nodes", "W_alpha", "W_beta"},
          [](const Tensors& in) { return Tensors{regularize(in[0], in[1], in[2])}; },
          [](const Tensors& in, const Tensors&, const Tensors& cot) {
            auto g = regularize_vjp(in[0], in[1], in[2], cot[0]);
            return Tensors{g.nodes, g.alpha, g.beta};
          }};
}

DiffOp remap_op(std::size_t begin, std::size_t end) {
  return {"remap",
          {"graph_nodes", "assoc", "W_inv"},
          [begin, end](const Tensors& in) { return Tensors{remap(in[0], begin, end, in[1], in[2])}; },
          [begin, end](const Tensors& in, const Tensors&, const Tensors& cot) {
            auto g = remap_vjp(in[0], begin, end, in[1], in[2], cot[0]);
            return Tensors{g.graph_nodes, g.assoc, g.inverse_weight};
          }};
}

DiffOp fuse_op(std::size_t layer) {
  return {"fuse",
          {"features", "remapped", "mu"},
          [layer](const Tensors& in) { return Tensors{fuse(in[0], in[1], in[2].f64()[layer])}; },
          [layer](const Tensors& in, const Tensors&, const Tensors& cot) {
            auto g = fuse_vjp(in[1], in[2].f64()[layer], cot[0]);
            Tensor d_mu(in[2].shape());
            d_mu.f64()[layer] = g.mu;
            return Tensors{g.features, g.remapped, d_mu};
          }};
}

DiffOp focal_loss_op(const FocalConfig& cfg) {
  return {"focal_loss",
          {"pred", "target"},
          [cfg](const Tensors& in) { return Tensors{Tensor({1}, {focal_loss(in[0], in[1], cfg)})}; },
          [cfg](const Tensors& in, const Tensors&, const Tensors& cot) {
            return Tensors{focal_loss_vjp(in[0], in[1], cfg, cot[0].f64()[0]), Tensor{}};
          }};
}

// ---- whole block --------------------------------------------------------------------

HrgrParams params_from(const HrgrParams& like, std::span<const Tensor> flat) {
  HrgrParams p = like;
  auto named = p.named();
  if (flat.size() != named.size()) {
    throw ValidationError("params_from: expected " + std::to_string(named.size()) + " tensors, got " +
                          std::to_string(flat.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    require_shape(flat[i], named[i].second->shape(), named[i].first.c_str());
    *named[i].second = flat[i];
  }
  return p;
}

Tensors flatten(const HrgrParams& params) {
  Tensors out;
  for (const auto& [name, t] : params.named()) out.push_back(*t);
  return out;
}

DiffOp hrgr_block_op(const HrgrConfig& cfg, const HrgrParams& like) {
  const std::size_t k = like.layers();
  std::vector<std::string> names;
  for (std::size_t i = 0; i < k; ++i) names.push_back("f" + std::to_string(i));
  for (const auto& [name, t] : like.named()) names.push_back(name);
  return {"hrgr_block", names,
          [cfg, like, k](const Tensors& in) {
            const auto params = params_from(like, std::span(in).subspan(k));
            return hrgr_block(std::span(in).first(k), params, cfg).features;
          },
          [cfg, like, k](const Tensors& in, const Tensors&, const Tensors& cot) {
            const auto params = params_from(like, std::span(in).subspan(k));
            HrgrTrace trace;
            hrgr_block(std::span(in).first(k), params, cfg, &trace);
            auto g = hrgr_block_vjp(trace, params, cfg, cot);
            Tensors out = g.features;
            for (auto& t : flatten(g.params)) out.push_back(std::move(t));
            return out;
          }};
}

Chain build_hrgr_chain(const HrgrConfig& cfg, const HrgrParams& like) {
  const std::size_t k = like.layers();
  const auto n = [](const char* stem, std::size_t i) { return stem + std::to_string(i); };
  Chain chain;
  std::vector<std::size_t> regions, offsets{0};
  std::vector<std::string> label_slots;
  for (std::size_t i = 0; i < k; ++i) {
    const DfpConfig layer = cfg.layer_dfp(i);
    regions.push_back(layer.regions);
    offsets.push_back(offsets.back() + layer.regions);
    const std::string reducer = "reducer" + std::to_string(i);
    chain.add(run_dfp_op(layer), {n("f", i), reducer + ".weight", reducer + ".bias"},
              {n("D", i), n("centers", i), n("J", i)});
    chain.add(aggregate_nodes_op(layer.epsilon), {n("D", i), n("f", i)}, {n("R", i)});
    label_slots.push_back(n("J", i));
  }
  chain.add(adjacency_op(regions, cfg), label_slots, {"A"});

  std::vector<std::string> project_in;
  for (std::size_t i = 0; i < k; ++i) project_in.push_back(n("R", i));
  for (std::size_t i = 0; i < k; ++i) project_in.push_back(n("project", i));
  chain.add(project_nodes_op(k), project_in, {"G0"});
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    chain.add(message_pass_op(), {n("G", r), "A", "graph_weight"}, {n("H", r)});
    chain.add(regularize_op(), {n("H", r), "alpha", "beta"}, {n("G", r + 1)});
  }
  const std::string graph = n("G", cfg.rounds);
  for (std::size_t i = 0; i < k; ++i) {
    chain.add(remap_op(offsets[i], offsets[i + 1]), {graph, n("D", i), n("inverse", i)}, {n("FG", i)});
    chain.add(fuse_op(i), {n("f", i), n("FG", i), "mu"}, {n("out", i)});
  }
  return chain;
}

Values hrgr_chain_seeds(std::span<const Tensor> features, const HrgrParams& params) {
  Values seeds;
  for (std::size_t i = 0; i < features.size(); ++i) seeds["f" + std::to_string(i)] = features[i];
  for (const auto& [name, t] : params.named()) seeds[name] = *t;
  return seeds;
}

// ---- gradcheck suite ------------------------------------------------------------------

namespace {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> uni(lo, hi);
  Tensor t(shape);
  for (auto& v : t.f64()) v = uni(rng);
  return t;
}

Tensor random_stochastic(std::size_t n, std::size_t m, std::mt19937_64& rng) {
  Tensor d = random_tensor({n, m}, rng, 0.05, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) total += d(i, j);
    for (std::size_t j = 0; j < m; ++j) d(i, j) /= total;
  }
  return d;
}

Tensor random_adjacency(std::size_t order, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.4);
  AdjacencyMatrix a(order);
  for (std::size_t u = 0; u < order; ++u)
    for (std::size_t v = u + 1; v < order; ++v)
      if (coin(rng)) a.connect(u, v);
  a.add_self_loops();
  return a.to_tensor();
}

GradCase make_case(const std::string& name, std::mt19937_64& rng) {
  if (name == "reduce_channels") {
    return {name, reduce_channels_op(),
            {random_tensor({4, 4, 5}, rng), random_tensor({5, 3}, rng), random_tensor({3}, rng)}};
  }
  if (name == "init_centers_grid") return {name, init_centers_grid_op(4), {random_tensor({4, 4, 3}, rng)}};
  if (name == "association") {
    return {name, association_op(), {random_tensor({12, 3}, rng), random_tensor({4, 3}, rng)}};
  }
  if (name == "update_centers") {
    return {name, update_centers_op(1e-8), {random_stochastic(20, 3, rng), random_tensor({20, 3}, rng)}};
  }
  if (name == "run_dfp") {
    DfpConfig cfg;
    cfg.regions = 4;
    cfg.iterations = 3;
    return {name, run_dfp_op(cfg),
            {random_tensor({8, 8, 3}, rng), random_tensor({5, 4}, rng), random_tensor({4}, rng, -0.1, 0.1)}};
  }
  if (name == "aggregate_nodes") {
    return {name, aggregate_nodes_op(1e-8), {random_stochastic(16, 4, rng), random_tensor({4, 4, 3}, rng)}};
  }
  if (name == "project_nodes") {
    return {name, project_nodes_op(2),
            {random_tensor({3, 4}, rng), random_tensor({5, 2}, rng), random_tensor({4, 6}, rng),
             random_tensor({2, 6}, rng)}};
  }
  if (name == "message_pass") {
    return {name, message_pass_op(), {random_tensor({6, 4}, rng), random_adjacency(6, rng), random_tensor({4, 4}, rng)}};
  }
  if (name == "regularize") {
    return {name, regularize_op(), {random_tensor({6, 4}, rng), random_tensor({4, 4}, rng), random_tensor({4, 4}, rng)}};
  }
  if (name == "remap") {
    return {name, remap_op(2, 5),
            {random_tensor({7, 4}, rng), random_stochastic(10, 3, rng), random_tensor({4, 5}, rng)}};
  }
  if (name == "fuse") {
    return {name, fuse_op(1),
            {random_tensor({3, 3, 2}, rng), random_tensor({9, 2}, rng), random_tensor({2}, rng, 0.5, 1.5)}};
  }
  if (name == "focal_loss") {
    Tensor target({5, 4});
    std::bernoulli_distribution coin(0.3);
    for (auto& v : target.f64()) v = coin(rng) ? 1.0 : 0.0;
    return {name, focal_loss_op({}), {random_tensor({5, 4}, rng, 0.05, 0.95), target}};
  }
  if (name == "hrgr_block") {
    HrgrConfig cfg;
    cfg.dfp.regions = 4;
    cfg.dfp.iterations = 2;
    const std::vector<std::size_t> channels{4, 6}, reduced{3, 4};
    const auto params = HrgrParams::init(channels, reduced, 8, rng);
    Tensors inputs{random_tensor({8, 8, 4}, rng), random_tensor({4, 4, 6}, rng)};
    for (auto& t : flatten(params)) inputs.push_back(std::move(t));
    // non-trivial biases and fusion weights so every gradient path is exercised
    std::uniform_real_distribution<double> uni(0.5, 1.5);
    const auto names = params.named();
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto& pname = names[i].first;
      Tensor& t = inputs[2 + i];
      if (pname == "mu" || pname.ends_with(".bias")) {
        for (auto& v : t.f64()) v = pname == "mu" ? uni(rng) : uni(rng) - 1.0;
      }
    }
    return {name, hrgr_block_op(cfg, params), inputs};
  }
  throw ValidationError("unknown gradcheck op '" + name + "'");
}

}  // namespace

std::vector<std::string> gradcheck_names() {
  return {"reduce_channels", "init_centers_grid", "association", "update_centers", "run_dfp",
          "aggregate_nodes", "project_nodes",     "message_pass", "regularize",     "remap",
          "fuse",            "focal_loss",        "hrgr_block"};
}

std::vector<GradCase> gradcheck_cases(const std::string& name, std::uint64_t seed) {
  std::vector<GradCase> cases;
  const auto names = gradcheck_names();
  if (name != "all" && std::find(names.begin(), names.end(), name) == names.end()) {
    throw ValidationError("unknown gradcheck op '" + name + "'");
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& candidate = names[i];
    if (name != "all" && candidate != name) continue;
    std::mt19937_64 rng(seed * 1000003 + i);
    cases.push_back(make_case(candidate, rng));
  }
  return cases;
}

std::vector<GradReport> run_gradcheck(const std::string& name, std::uint64_t seed, const GradCheckOptions& options) {
  std::vector<GradReport> reports;
  GradCheckOptions opts = options;
  opts.seed = seed;
  for (const auto& c : gradcheck_cases(name, seed)) {
    auto r = grad_check(c.op, c.inputs, opts);
    reports.insert(reports.end(), r.begin(), r.end());
  }
  return reports;
}

}  // namespace hrgr
