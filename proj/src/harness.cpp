#include "hrgr/harness.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numbers>

namespace hrgr {

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "blobs") return SyntheticKind::kBlobs;
  if (name == "forgery") return SyntheticKind::kForgery;
  throw ValidationError("unknown synthetic kind '" + name + "' (expected blobs|forgery)");
}

BlobSample gen_blobs(const SyntheticSpec& spec) {
  if (spec.h == 0 || spec.w == 0 || spec.channels == 0) throw ValidationError("gen_blobs: empty spec");
  if (spec.grid_h == 0 || spec.grid_w == 0 || spec.grid_h > spec.h || spec.grid_w > spec.w) {
    throw ValidationError("gen_blobs: block grid does not fit the map");
  }
  if (spec.sigma < 0.0) throw ValidationError("gen_blobs: sigma must be >= 0");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uni(0.5, 3.0);
  const std::size_t blocks = spec.grid_h * spec.grid_w, c = spec.channels;
  const double min_gap = 6.0 * spec.sigma;

  std::vector<std::vector<double>> centers;
  for (std::size_t attempts = 0; centers.size() < blocks; ++attempts) {
    if (attempts > 100000) throw ValidationError("gen_blobs: cannot separate blocks by 6 sigma");
    std::vector<double> v(c);
    for (auto& x : v) x = uni(rng);
    const bool separated = std::all_of(centers.begin(), centers.end(), [&](const auto& other) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < c; ++k) d2 += (v[k] - other[k]) * (v[k] - other[k]);
      return std::sqrt(d2) > min_gap;
    });
    if (separated) centers.push_back(std::move(v));
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  BlobSample out{Tensor({spec.h, spec.w, c}), Tensor({spec.h, spec.w}, DType::kIndex)};
  auto f = out.features.f64();
  auto labels = out.labels.idx();
  for (std::size_t y = 0; y < spec.h; ++y) {
    const std::size_t by = y * spec.grid_h / spec.h;
    for (std::size_t x = 0; x < spec.w; ++x) {
      const std::size_t bx = x * spec.grid_w / spec.w;
      const std::size_t block = by * spec.grid_w + bx;
      labels[y * spec.w + x] = static_cast<std::uint32_t>(block + 1);
      for (std::size_t k = 0; k < c; ++k) {
        const double n = spec.sigma > 0.0 ? spec.sigma * noise(rng) : 0.0;
        f[(y * spec.w + x) * c + k] = centers[block][k] + n;
      }
    }
  }
  return out;
}

namespace {

struct Shape2 {
  bool ellipse;
  std::size_t rh, rw;
  bool contains(std::size_t dy, std::size_t dx) const {
    if (!ellipse) return true;
    const double u = (static_cast<double>(dy) + 0.5) / static_cast<double>(rh) * 2.0 - 1.0;
    const double v = (static_cast<double>(dx) + 0.5) / static_cast<double>(rw) * 2.0 - 1.0;
    return u * u + v * v <= 1.0;
  }
};

}  // namespace

ForgerySample gen_forgery(const SyntheticSpec& spec) {
  if (spec.h < 16 || spec.w < 16) throw ValidationError("gen_forgery: images must be at least 16x16");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };
  const std::size_t h = spec.h, w = spec.w;

  // background: per-channel base level plus a few low-frequency waves
  Tensor background({h, w, 3});
  auto bg = background.f64();
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t c = 0; c < 3; ++c) {
    const double base = between(0.3, 0.5);
    struct Wave {
      double amp, fy, fx, phase;
    };
    std::vector<Wave> waves;
    for (int t = 0; t < 3; ++t) {
      waves.push_back({between(0.02, 0.06), between(0.5, 2.0), between(0.5, 2.0), between(0.0, 2 * std::numbers::pi)});
    }
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double v = base;
        for (const auto& wv : waves) {
          v += wv.amp * std::sin(2 * std::numbers::pi *
                                     (wv.fy * static_cast<double>(y) / static_cast<double>(h) +
                                      wv.fx * static_cast<double>(x) / static_cast<double>(w)) +
                                 wv.phase);
        }
        bg[(y * w + x) * 3 + c] = v;
      }
    }
  }
  for (auto& v : bg) v += spec.sigma * 0.2 * noise(rng);

  // region shape, destination and a non-overlapping source
  const double total = static_cast<double>(h * w);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Shape2 shape{uni(rng) < 0.5, static_cast<std::size_t>(between(0.15, 0.45) * static_cast<double>(h)),
                 static_cast<std::size_t>(between(0.15, 0.45) * static_cast<double>(w))};
    std::size_t area = 0;
    for (std::size_t dy = 0; dy < shape.rh; ++dy)
      for (std::size_t dx = 0; dx < shape.rw; ++dx) area += shape.contains(dy, dx);
    const double fraction = static_cast<double>(area) / total;
    if (fraction < 0.02 || fraction > 0.30) continue;

    std::uniform_int_distribution<std::size_t> py(0, h - shape.rh), px(0, w - shape.rw);
    const std::size_t ty = py(rng), tx = px(rng), sy = py(rng), sx = px(rng);
    const bool overlap = ty < sy + shape.rh && sy < ty + shape.rh && tx < sx + shape.rw && sx < tx + shape.rw;
    if (overlap) continue;

    std::array<double, 3> shift{};
    for (auto& s : shift) s = between(0.2, 0.35);
    ForgerySample out{background, Tensor({h, w})};
    auto img = out.image.f64();
    auto mask = out.mask.f64();
    for (std::size_t dy = 0; dy < shape.rh; ++dy) {
      for (std::size_t dx = 0; dx < shape.rw; ++dx) {
        if (!shape.contains(dy, dx)) continue;
        const std::size_t dst = (ty + dy) * w + tx + dx, src = (sy + dy) * w + sx + dx;
        for (std::size_t c = 0; c < 3; ++c) img[dst * 3 + c] = bg[src * 3 + c] + shift[c];
        mask[dst] = 1.0;
      }
    }
    return out;
  }
  throw ValidationError("gen_forgery: could not place a region");
}

// ---- toy model ----------------------------------------------------------------------

void ToyConfig::validate() const {
  if (layers < 1) throw ValidationError("train-toy: layers must be >= 1");
  const std::size_t stride = std::size_t{1} << (layers - 1);
  if (h % stride || w % stride) {
    throw ValidationError("train-toy: image size must be divisible by 2^(layers-1)");
  }
  if (channels < 1 || train_images < 1 || eval_images < 1) throw ValidationError("train-toy: empty configuration");
  if (!(lr >= 0.0)) throw ValidationError("train-toy: lr must be >= 0");
}

nlohmann::json ToyConfig::to_json() const {
  return {{"h", h},
          {"w", w},
          {"layers", layers},
          {"regions", regions},
          {"iterations", iterations},
          {"channels", channels},
          {"width", width},
          {"steps", steps},
          {"lr", lr},
          {"beta1", beta1},
          {"beta2", beta2},
          {"weight_decay", weight_decay},
          {"train_images", train_images},
          {"eval_images", eval_images},
          {"seed", seed},
          {"freeze_mu", freeze_mu},
          {"mode", to_string(mode)},
          {"threads", threads}};
}

namespace {

Tensor uniform(const Shape& shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(-bound, bound);
  Tensor t(shape);
  for (auto& v : t.f64()) v = uni(rng);
  return t;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

ToyModel ToyModel::init(const ToyConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  ToyModel m;
  std::vector<std::size_t> channels(cfg.layers, cfg.channels);
  std::vector<std::size_t> reduced(cfg.layers, std::min<std::size_t>(16, cfg.channels + 1));
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    m.enc_weight.push_back(uniform({3, cfg.channels}, 1.0 / std::sqrt(3.0), rng));
    m.enc_bias.push_back(Tensor({cfg.channels}));
  }
  const std::size_t width = cfg.width ? cfg.width : cfg.channels;
  m.hrgr = HrgrParams::init(channels, reduced, width, rng);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    m.dec_weight.push_back(uniform({cfg.channels, 1}, 1.0 / std::sqrt(static_cast<double>(cfg.channels)), rng));
  }
  m.dec_bias = Tensor({1});
  m.block.dfp.regions = cfg.regions;
  m.block.dfp.iterations = cfg.iterations;
  m.block.threads = cfg.threads;
  m.block.apply(cfg.mode);
  if (cfg.freeze_mu) m.hrgr.mu = Tensor(m.hrgr.mu.shape());
  return m;
}

ToyModel ToyModel::zeros_like() const {
  ToyModel z = *this;
  for (auto& [name, t] : z.named()) *t = Tensor(t->shape());
  return z;
}

std::vector<std::pair<std::string, Tensor*>> ToyModel::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t i = 0; i < enc_weight.size(); ++i) {
    out.emplace_back("enc" + std::to_string(i) + ".weight", &enc_weight[i]);
    out.emplace_back("enc" + std::to_string(i) + ".bias", &enc_bias[i]);
  }
  for (auto& [name, t] : hrgr.named()) out.emplace_back("hrgr." + name, t);
  for (std::size_t i = 0; i < dec_weight.size(); ++i) out.emplace_back("dec" + std::to_string(i), &dec_weight[i]);
  out.emplace_back("dec.bias", &dec_bias);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ToyModel::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<ToyModel*>(this)->named()) out.emplace_back(name, t);
  return out;
}

Tensor mean_pool2(const Tensor& map) {
  require_rank(map, 3, "mean_pool2");
  const std::size_t h = map.dim(0), w = map.dim(1), c = map.dim(2);
  if (h % 2 || w % 2) throw ShapeError("mean_pool2: odd spatial size " + to_string(map.shape()));
  Tensor out({h / 2, w / 2, c});
  auto src = map.f64();
  auto dst = out.f64();
  for (std::size_t y = 0; y < h / 2; ++y)
    for (std::size_t x = 0; x < w / 2; ++x)
      for (std::size_t k = 0; k < c; ++k) {
        const double s = src[((2 * y) * w + 2 * x) * c + k] + src[((2 * y) * w + 2 * x + 1) * c + k] +
                         src[((2 * y + 1) * w + 2 * x) * c + k] + src[((2 * y + 1) * w + 2 * x + 1) * c + k];
        dst[(y * (w / 2) + x) * c + k] = 0.25 * s;
      }
  return out;
}

Tensor toy_forward(const ToyModel& model, const Tensor& image, ToyForward* cache) {
  require_rank(image, 3, "toy_forward image");
  const std::size_t k = model.enc_weight.size(), h = image.dim(0), w = image.dim(1);
  ToyForward local;
  ToyForward& f = cache ? *cache : local;
  f = ToyForward{};
  f.pooled.push_back(image);
  for (std::size_t i = 1; i < k; ++i) f.pooled.push_back(mean_pool2(f.pooled.back()));
  for (std::size_t i = 0; i < k; ++i) {
    const Tensor& level = f.pooled[i];
    const std::size_t hi = level.dim(0), wi = level.dim(1);
    Tensor enc = matmul(level.reshaped({hi * wi, level.dim(2)}), model.enc_weight[i]);
    const std::size_t c = enc.dim(1);
    auto ev = enc.f64();
    auto b = model.enc_bias[i].f64();
    for (std::size_t j = 0; j < ev.size(); ++j) ev[j] += b[j % c];
    f.encoded.push_back(std::move(enc).reshaped({hi, wi, c}));
  }
  f.enhanced = hrgr_block(f.encoded, model.hrgr, model.block, &f.trace).features;

  f.pred = Tensor({h, w});
  auto pv = f.pred.f64();
  const double bias = model.dec_bias.f64()[0];
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double logit = bias;
      for (std::size_t i = 0; i < k; ++i) {
        const Tensor& out = f.enhanced[i];
        const std::size_t wi = out.dim(1), c = out.dim(2);
        const double* cell = out.f64().data() + (((y >> i) * wi) + (x >> i)) * c;
        auto dw = model.dec_weight[i].f64();
        for (std::size_t ch = 0; ch < c; ++ch) logit += cell[ch] * dw[ch];
      }
      pv[y * w + x] = sigmoid(logit);
    }
  }
  return f.pred;
}

ToyModel toy_backward(const ToyModel& model, const ToyForward& cache, const Tensor& d_pred) {
  const std::size_t k = model.enc_weight.size(), h = cache.pred.dim(0), w = cache.pred.dim(1);
  require_shape(d_pred, cache.pred.shape(), "toy_backward cotangent");
  ToyModel grad = model.zeros_like();
  auto pv = cache.pred.f64();
  auto gv = d_pred.f64();

  std::vector<Tensor> d_enhanced;
  for (const auto& out : cache.enhanced) d_enhanced.emplace_back(out.shape());
  double d_bias = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double p = pv[y * w + x];
      const double d_logit = gv[y * w + x] * p * (1.0 - p);
      d_bias += d_logit;
      for (std::size_t i = 0; i < k; ++i) {
        const Tensor& out = cache.enhanced[i];
        const std::size_t wi = out.dim(1), c = out.dim(2);
        const std::size_t at = (((y >> i) * wi) + (x >> i)) * c;
        const double* cell = out.f64().data() + at;
        auto dw = model.dec_weight[i].f64();
        auto gdw = grad.dec_weight[i].f64();
        auto de = d_enhanced[i].f64();
        for (std::size_t ch = 0; ch < c; ++ch) {
          gdw[ch] += d_logit * cell[ch];
          de[at + ch] += d_logit * dw[ch];
        }
      }
    }
  }
  grad.dec_bias.f64()[0] = d_bias;

  auto block = hrgr_block_vjp(cache.trace, model.hrgr, model.block, d_enhanced);
  grad.hrgr = std::move(block.params);
  for (std::size_t i = 0; i < k; ++i) {
    const Tensor& level = cache.pooled[i];
    const std::size_t n = level.dim(0) * level.dim(1);
    const Tensor rows = level.reshaped({n, level.dim(2)});
    const Tensor d_rows = block.features[i].reshaped({n, block.features[i].dim(2)});
    grad.enc_weight[i] = matmul_tn(rows, d_rows);
    grad.enc_bias[i] = column_sums(d_rows);
  }
  return grad;
}

namespace {

FocalConfig toy_focal() {
  FocalConfig f;
  f.reduction = Reduction::kMean;
  return f;
}

}  // namespace

double toy_loss(const ToyModel& model, const std::vector<ForgerySample>& batch) {
  double total = 0.0;
  for (const auto& sample : batch) total += focal_loss(toy_forward(model, sample.image), sample.mask, toy_focal());
  return total / static_cast<double>(batch.size());
}

std::vector<ForgerySample> toy_batch(const ToyConfig& cfg, std::uint64_t seed, std::size_t count) {
  std::vector<ForgerySample> batch;
  for (std::size_t j = 0; j < count; ++j) {
    SyntheticSpec spec;
    spec.h = cfg.h;
    spec.w = cfg.w;
    spec.kind = SyntheticKind::kForgery;
    spec.seed = seed * 7919 + j;
    batch.push_back(gen_forgery(spec));
  }
  return batch;
}

nlohmann::json ToyReport::to_json() const {
  return {{"config", config.to_json()},
          {"losses", losses},
          {"initial_loss", initial_loss},
          {"final_loss", final_loss},
          {"auc", eval.auc},
          {"f1", eval.f1_eer},
          {"eer_threshold", eval.eer_threshold},
          {"mu_grad_first_step", mu_grad_first_step}};
}

ToyReport train_toy(const ToyConfig& cfg, ToyModel* trained) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  ToyModel model = ToyModel::init(cfg, rng);
  const auto train = toy_batch(cfg, 2 * cfg.seed + 1, cfg.train_images);
  const auto held_out = toy_batch(cfg, 2 * cfg.seed + 2, cfg.eval_images);
  const FocalConfig focal = toy_focal();

  ToyModel first = model.zeros_like(), second = model.zeros_like();
  auto params = model.named();
  auto m1 = first.named();
  auto m2 = second.named();

  ToyReport report;
  report.config = cfg;
  const double inv_batch = 1.0 / static_cast<double>(train.size());
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    ToyModel grad = model.zeros_like();
    auto g = grad.named();
    double loss = 0.0;
    for (const auto& sample : train) {
      ToyForward cache;
      toy_forward(model, sample.image, &cache);
      loss += focal_loss(cache.pred, sample.mask, focal) * inv_batch;
      const ToyModel sg = toy_backward(model, cache, focal_loss_vjp(cache.pred, sample.mask, focal, inv_batch));
      const auto sgn = sg.named();
      for (std::size_t t = 0; t < g.size(); ++t) axpy(*g[t].second, 1.0, *sgn[t].second);
    }
    if (!std::isfinite(loss)) throw NumericalError("train-toy: non-finite loss at step " + std::to_string(step));
    report.losses.push_back(loss);
    if (step == 0) {
      const auto mu = grad.hrgr.mu.f64();
      report.mu_grad_first_step.assign(mu.begin(), mu.end());
    }
    if (cfg.freeze_mu) grad.hrgr.mu = Tensor(grad.hrgr.mu.shape());

    // AdamW with decoupled weight decay
    const double t = static_cast<double>(step + 1);
    const double c1 = 1.0 - std::pow(cfg.beta1, t), c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t p = 0; p < params.size(); ++p) {
      if (cfg.freeze_mu && params[p].first == "hrgr.mu") continue;
      auto x = params[p].second->f64();
      auto gv = g[p].second->f64();
      auto mv = m1[p].second->f64();
      auto vv = m2[p].second->f64();
      for (std::size_t j = 0; j < x.size(); ++j) {
        mv[j] = cfg.beta1 * mv[j] + (1.0 - cfg.beta1) * gv[j];
        vv[j] = cfg.beta2 * vv[j] + (1.0 - cfg.beta2) * gv[j] * gv[j];
        const double update = (mv[j] / c1) / (std::sqrt(vv[j] / c2) + cfg.adam_eps);
        x[j] -= cfg.lr * (update + cfg.weight_decay * x[j]);
      }
    }
  }

  report.initial_loss = report.losses.empty() ? toy_loss(model, train) : report.losses.front();
  report.final_loss = toy_loss(model, train);
  if (!std::isfinite(report.final_loss)) throw NumericalError("train-toy: non-finite final loss");

  std::vector<double> scores, labels;
  for (const auto& sample : held_out) {
    const Tensor pred = toy_forward(model, sample.image);
    scores.insert(scores.end(), pred.f64().begin(), pred.f64().end());
    labels.insert(labels.end(), sample.mask.f64().begin(), sample.mask.f64().end());
  }
  const std::size_t n = scores.size();
  report.eval = evaluate(Tensor({n}, std::move(scores)), Tensor({n}, std::move(labels)));
  if (trained) *trained = std::move(model);
  return report;
}

// ---- adjacency workloads --------------------------------------------------------------

std::vector<Tensor> random_index_maps(std::size_t h, std::size_t w, std::span<const std::size_t> regions,
                                      std::uint64_t seed, bool voronoi) {
  std::mt19937_64 rng(seed);
  std::vector<Tensor> maps;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const std::size_t hi = std::max<std::size_t>(1, h >> i), wi = std::max<std::size_t>(1, w >> i);
    const std::size_t m = regions[i];
    if (m == 0) throw ValidationError("random_index_maps: region count must be >= 1");
    Tensor map({hi, wi}, DType::kIndex);
    auto labels = map.idx();
    if (!voronoi) {
      std::uniform_int_distribution<std::uint32_t> pick(1, static_cast<std::uint32_t>(m));
      for (auto& l : labels) l = pick(rng);
    } else {
      std::uniform_real_distribution<double> uy(0.0, static_cast<double>(hi)), ux(0.0, static_cast<double>(wi));
      std::vector<std::pair<double, double>> sites(m);
      for (auto& s : sites) s = {uy(rng), ux(rng)};
      for (std::size_t y = 0; y < hi; ++y) {
        for (std::size_t x = 0; x < wi; ++x) {
          std::size_t best = 0;
          double best_d = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            const double dy = static_cast<double>(y) + 0.5 - sites[j].first;
            const double dx = static_cast<double>(x) + 0.5 - sites[j].second;
            const double d = dy * dy + dx * dx;
            if (j == 0 || d < best_d) best = j, best_d = d;
          }
          labels[y * wi + x] = static_cast<std::uint32_t>(best + 1);
        }
      }
    }
    maps.push_back(std::move(map));
  }
  return maps;
}

nlohmann::json BenchReport::to_json() const {
  return {{"h", h},
          {"w", w},
          {"layers", layers},
          {"threads", threads},
          {"repeats", repeats},
          {"nodes", nodes},
          {"edges", edges},
          {"oracle_ms", oracle_ms},
          {"parallel_ms", parallel_ms},
          {"speedup", parallel_ms > 0.0 ? oracle_ms / parallel_ms : 0.0},
          {"parallel_faster", parallel_ms < oracle_ms},
          {"identical", identical}};
}

BenchReport bench_adjacency(std::size_t h, std::size_t w, std::size_t layers, std::size_t regions,
                            std::size_t threads, std::size_t repeats, std::uint64_t seed) {
  if (h == 0 || w == 0 || layers == 0 || threads == 0 || repeats == 0) {
    throw ValidationError("bench: sizes, threads and repeats must be >= 1");
  }
  const std::vector<std::size_t> counts(layers, regions);
  const auto maps = random_index_maps(h, w, counts, seed, true);
  const StackedIndexVolume stacked = stack_index_maps(maps, counts);

  using clock = std::chrono::steady_clock;
  auto best_of = [&](auto&& build, AdjacencyMatrix& out) {
    double best = 0.0;
    for (std::size_t r = 0; r < repeats; ++r) {
      const auto t0 = clock::now();
      out = build();
      const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
      if (r == 0 || ms < best) best = ms;
    }
    return best;
  };
  AdjacencyMatrix oracle, parallel;
  BenchReport report;
  report.oracle_ms = best_of([&] { return build_adjacency_oracle(stacked); }, oracle);
  report.parallel_ms = best_of([&] { return build_adjacency_parallel(stacked, threads); }, parallel);
  report.h = stacked.height();
  report.w = stacked.width();
  report.layers = layers;
  report.threads = threads;
  report.repeats = repeats;
  report.nodes = stacked.node_count();
  report.edges = oracle.edge_count();
  report.identical = oracle == parallel;
  return report;
}

}  // namespace hrgr
