// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>

#include <json.hpp>

#include "hrgr/dfp.hpp"
#include "hrgr/graph.hpp"
#include "hrgr/harness.hpp"
#include "hrgr/loss.hpp"
#include "hrgr/metrics.hpp"
#include "hrgr/ops.hpp"
#include "hrgr/reasoning.hpp"
#include "hrgr/tensor.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace hrgr;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

Tensor random_features(const Shape& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(shape);
  for (auto& v : t.f64()) v = n(rng);
  return t;
}

// ---- 1 ----------------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  GradCheckOptions opts;
  opts.h = 1e-5;
  opts.tol = 1e-4;
  std::size_t checked = 0;
  std::vector<std::string> failures;
  std::map<std::string, bool> covered;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (const auto& r : run_gradcheck("all", seed, opts)) {
      ++checked;
      covered[r.op] = true;
      if (!r.pass) failures.push_back(r.op + "/" + r.input + " seed " + std::to_string(seed));
    }
  }
  const double secs = seconds_since(t0);
  for (const char* op : {"reduce_channels", "association", "update_centers", "run_dfp", "aggregate_nodes",
                         "project_nodes", "message_pass", "regularize", "remap", "fuse", "focal_loss", "hrgr_block"}) {
    if (!covered[op]) failures.push_back(std::string("missing ") + op);
  }
  std::string detail = std::to_string(checked) + " input checks over 5 seeds in " + fmt(secs) + " s";
  if (!failures.empty()) detail += "; failed: " + failures.front();
  return {failures.empty() && secs < 300.0, detail};
}

// ---- 2 ----------------------------------------------------------------------------------

Outcome adjacency_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = 1 + rng() % 32, w = 1 + rng() % 32, k = 1 + rng() % 4;
    std::vector<std::size_t> regions(k);
    for (auto& m : regions) m = 1 + rng() % 16;
    const auto maps = random_index_maps(h, w, regions, rng(), trial % 2 == 0);
    const StackedIndexVolume stacked = stack_index_maps(maps, regions);
    AdjacencyOptions opts;
    opts.self_loops = trial % 3 != 0;
    if (trial % 5 == 0) opts.hierarchy = Hierarchy::kIntraLayer;
    const AdjacencyMatrix oracle = build_adjacency_oracle(stacked, opts);
    for (std::size_t threads : {1, 2, 4, 8}) {
      const AdjacencyMatrix par = build_adjacency_parallel(stacked, threads, opts);
      if (!(par == oracle) || std::memcmp(par.cells().data(), oracle.cells().data(), oracle.cells().size()) != 0) {
        ++mismatches;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 60.0,
          "100 instances x threads {1,2,4,8}, " + std::to_string(mismatches) + " mismatches in " + fmt(secs) + " s"};
}

// ---- 3 ----------------------------------------------------------------------------------

Outcome coarse_over_quadrants() {
  const Tensor coarse = Tensor::from_index({2, 2}, {1, 1, 1, 1});
  const Tensor quads = Tensor::from_index({4, 4}, {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
  const std::vector<Tensor> maps{quads, coarse};
  const std::vector<std::size_t> counts{4, 1};
  // finest layer first: quadrant nodes 1..4, the coarse region is node 5
  const StackedIndexVolume fine_first = stack_index_maps(maps, counts);
  const AdjacencyMatrix a = build_adjacency_oracle(fine_first);
  // coarse map first: the coarse region is node 1 and the quadrants are 2..5
  const std::vector<Tensor> maps_coarse_first{coarse, quads};
  const std::vector<std::size_t> counts_coarse_first{1, 4};
  const StackedIndexVolume coarse_first = stack_index_maps(maps_coarse_first, counts_coarse_first);
  const AdjacencyMatrix b = build_adjacency_oracle(coarse_first);
  bool ok = b.order() == 5 && a.order() == 5;
  for (std::size_t q = 1; q < 5 && ok; ++q) ok = b(0, q) && b(q, 0);
  for (std::size_t p = 1; p < 5 && ok; ++p)
    for (std::size_t q = p + 1; q < 5 && ok; ++q) ok = b(p, q);
  for (std::size_t q = 0; q < 4 && ok; ++q) ok = a(4, q);
  ok = ok && build_adjacency_parallel(coarse_first, 4) == b && build_adjacency_parallel(fine_first, 4) == a;
  return {ok, "5 nodes, " + std::to_string(b.edge_count()) + " edges; node 1 joins 2-5, quadrants pairwise adjacent"};
}

// ---- 4 ----------------------------------------------------------------------------------

Outcome row_stochasticity() {
  std::mt19937_64 rng(4);
  double worst_row = 0.0;
  std::size_t rows = 0;
  auto check_rows = [&](const Tensor& d) {
    for (std::size_t i = 0; i < d.dim(0); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d.dim(1); ++j) s += d(i, j);
      worst_row = std::max(worst_row, std::abs(s - 1.0));
      ++rows;
    }
  };
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t h = 2 + rng() % 20, w = 2 + rng() % 20, c = 2 + rng() % 5;
    DfpConfig cfg;
    cfg.use_coords = trial % 2 == 0;
    cfg.iterations = 1 + rng() % 6;
    cfg.regions = 1 + rng() % std::min<std::size_t>(16, h * w);
    if (cfg.regions > 1) {
      try {
        grid_factorization(cfg.regions, h, w);
      } catch (const ValidationError&) {
        cfg.regions = 1;
      }
    }
    const Tensor f = random_features({h, w, c}, rng);
    const std::size_t in = c + (cfg.use_coords ? 2 : 0);
    const ChannelReducer reducer = ChannelReducer::init(in, std::max<std::size_t>(1, in - 1), rng);
    const DfpResult r = run_dfp(f, reducer, cfg);
    check_rows(r.assoc);
    check_rows(association(random_features({h * w, 3}, rng), random_features({cfg.regions, 3}, rng)));
  }

  // one-hot D against per-region means accumulated by a loop
  double worst_mean = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 50 + rng() % 100, m = 2 + rng() % 10, c = 1 + rng() % 5;
    const Tensor f = random_features({n, c}, rng);
    Tensor d({n, m});
    std::vector<std::size_t> label(n);
    for (std::size_t i = 0; i < n; ++i) {
      label[i] = i < m ? i : rng() % m;  // every region non-empty
      d(i, label[i]) = 1.0;
    }
    const Tensor centers = update_centers(d, f, 1e-8);
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<double> sum(c, 0.0);
      double count = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (label[i] != j) continue;
        for (std::size_t k = 0; k < c; ++k) sum[k] += f(i, k);
        count += 1.0;
      }
      for (std::size_t k = 0; k < c; ++k) worst_mean = std::max(worst_mean, std::abs(centers(j, k) - sum[k] / count));
    }
  }
  return {worst_row <= 1e-6 && worst_mean <= 1e-10,
          std::to_string(rows) + " rows, worst |row sum - 1| " + fmt(worst_row) + ", worst one-hot mean error " +
              fmt(worst_mean)};
}

// ---- 5 ----------------------------------------------------------------------------------

Outcome partition_recovery() {
  const auto t0 = Clock::now();
  std::size_t good = 0;
  std::string aris;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticSpec spec;
    spec.h = spec.w = 32;
    spec.grid_h = spec.grid_w = 4;
    spec.sigma = 0.05;
    spec.seed = seed;
    const BlobSample blobs = gen_blobs(spec);
    DfpConfig cfg;
    cfg.regions = 16;
    cfg.iterations = 10;
    const std::size_t in = spec.channels + 2;
    const DfpResult r = run_dfp(blobs.features, ChannelReducer::truncation(in, in - 1), cfg);
    const double ari = adjusted_rand_index(r.labels.reshaped({1024}), blobs.labels.reshaped({1024}));
    if (ari >= 0.9) ++good;
    aris += (aris.empty() ? "" : " ") + fmt(std::round(ari * 1000) / 1000);
  }
  const double secs = seconds_since(t0);
  return {good >= 9 && secs < 30.0,
          std::to_string(good) + "/10 seeds with ARI >= 0.9 [" + aris + "] in " + fmt(secs) + " s"};
}

// ---- 6 ----------------------------------------------------------------------------------

Outcome identity_contracts() {
  std::mt19937_64 rng(6);
  const std::vector<Tensor> features{random_features({16, 16, 6}, rng), random_features({8, 8, 10}, rng)};
  const std::vector<std::size_t> channels{6, 10}, reduced{7, 11};
  HrgrParams params = HrgrParams::init(channels, reduced, 12, rng);
  params.mu = Tensor(params.mu.shape());
  HrgrConfig cfg;
  cfg.dfp.regions = 8;
  cfg.dfp.iterations = 3;
  const HrgrOutput out = hrgr_block(features, params, cfg);
  const bool block_identity = max_abs_diff(out.features[0], features[0]) == 0.0 &&
                              max_abs_diff(out.features[1], features[1]) == 0.0;

  const Tensor nodes = random_features({9, 5}, rng);
  Tensor eye({5, 5});
  for (std::size_t i = 0; i < 5; ++i) eye(i, i) = 1.0;
  const bool mp_identity = max_abs_diff(message_pass(nodes, AdjacencyMatrix::identity(9), eye), nodes) == 0.0;

  // 16 x 16 with m = 16 tiles 4 x 4 cells; 32 x 16 with m = 8 tiles 8 x 8 cells
  bool grid_exact = true;
  struct GridCase {
    std::size_t h, w, m, cell_h, cell_w;
  };
  for (const GridCase g : {GridCase{16, 16, 16, 4, 4}, GridCase{32, 16, 8, 8, 8}}) {
    DfpConfig dcfg;
    dcfg.regions = g.m;
    dcfg.mode = PartitionMode::kRegularGrid;
    const Tensor f = random_features({g.h, g.w, 3}, rng);
    const DfpResult r = run_dfp(f, ChannelReducer::truncation(5, 4), dcfg);
    const std::size_t cols = g.w / g.cell_w;
    for (std::size_t y = 0; y < g.h; ++y)
      for (std::size_t x = 0; x < g.w; ++x) {
        const std::uint32_t want = static_cast<std::uint32_t>((y / g.cell_h) * cols + x / g.cell_w + 1);
        grid_exact = grid_exact && r.labels.idx()[y * g.w + x] == want;
      }
  }
  return {block_identity && mp_identity && grid_exact,
          std::string("mu=0 block ") + (block_identity ? "exact" : "differs") + ", A=I message pass " +
              (mp_identity ? "exact" : "differs") + ", grid labels " + (grid_exact ? "exact" : "differ")};
}

// ---- 7 ----------------------------------------------------------------------------------

Outcome focal_values() {
  const Tensor half({1}, std::vector<double>{0.5}), one({1}, std::vector<double>{1.0});
  const double value = focal_loss(half, one);
  const double scalar = 0.5 * std::pow(1.0 - 0.5, 2.0) * -std::log(0.5);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(0.01, 0.99);
  std::bernoulli_distribution coin(0.5);
  Tensor y({400}), t({400});
  double bce = 0.0;
  for (std::size_t i = 0; i < 400; ++i) {
    y.f64()[i] = uni(rng);
    t.f64()[i] = coin(rng) ? 1.0 : 0.0;
    bce -= t.f64()[i] * std::log(y.f64()[i]) + (1 - t.f64()[i]) * std::log(1 - y.f64()[i]);
  }
  FocalConfig g0;
  g0.gamma = 0.0;
  const double gap = std::abs(focal_loss(y, t, g0) - 0.5 * bce);
  const bool ok = std::abs(value - 0.08664) <= 1e-4 && std::abs(value - scalar) <= 1e-12 && gap <= 1e-10;
  return {ok, "FL(0.5, 1) = " + fmt(value) + " (scalar " + fmt(scalar) + "), |gamma 0 - BCE/2| = " + fmt(gap)};
}

// ---- 8 ----------------------------------------------------------------------------------

Outcome toy_trainability() {
  const auto t0 = Clock::now();
  const ToyConfig cfg;
  const ToyReport first = train_toy(cfg);
  const double secs = seconds_since(t0);
  const ToyReport second = train_toy(cfg);
  const double ratio = first.final_loss / first.initial_loss;
  const bool deterministic = first.losses == second.losses && first.final_loss == second.final_loss;
  return {ratio <= 0.5 && deterministic && secs < 300.0,
          "loss " + fmt(first.initial_loss) + " -> " + fmt(first.final_loss) + " (ratio " + fmt(ratio) + ") in " +
              std::to_string(cfg.steps) + " steps, " + fmt(secs) + " s, " +
              (deterministic ? "deterministic" : "NOT deterministic") + ", held-out AUC " + fmt(first.eval.auc)};
}

// ---- 9 ----------------------------------------------------------------------------------

Outcome metric_oracles() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> uni(0, 1);
  double worst_auc = 0.0;
  std::size_t f1_mismatch = 0, f1_cases = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(1000), l(1000);
    for (std::size_t i = 0; i < 1000; ++i) {
      l[i] = uni(rng) < 0.3 ? 1.0 : 0.0;
      s[i] = trial % 2 ? std::round(uni(rng) * 25) / 25 : uni(rng) + 0.25 * l[i];
    }
    const double got = pixel_auc(Tensor({1000}, s), Tensor({1000}, l));
    worst_auc = std::max(worst_auc, std::abs(got - testing::pair_count_auc(s, l)));
  }
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(200), l(200);
    for (std::size_t i = 0; i < 200; ++i) {
      l[i] = uni(rng) < 0.4 ? 1.0 : 0.0;
      s[i] = trial % 3 == 0 ? std::round(uni(rng) * 12) / 12 : uni(rng) + 0.3 * l[i];
    }
    const auto positives = std::count(l.begin(), l.end(), 1.0);
    if (positives == 0 || positives == 200) continue;
    ++f1_cases;
    const F1AtEer got = f1_at_eer(Tensor({200}, s), Tensor({200}, l));
    const testing::Sweep want = testing::exhaustive_sweep(s, l);
    if (got.threshold != want.threshold || std::abs(got.f1 - want.f1) > 1e-15) ++f1_mismatch;
  }
  return {worst_auc <= 1e-12 && f1_mismatch == 0,
          "AUC worst gap " + fmt(worst_auc) + " over 20 cases; F1@EER " + std::to_string(f1_mismatch) +
              " mismatches over " + std::to_string(f1_cases) + " cases"};
}

// ---- 10 ---------------------------------------------------------------------------------

Outcome bench_speed() {
  const fs::path report = fs::temp_directory_path() / ("hrgr_bench_" + std::to_string(::getpid()) + ".json");
  const std::string cmd = std::string(HRGR_CLI_PATH) +
                          " bench --h 128 --w 128 --layers 4 --regions 64 --threads 8 --repeats 5 --seed 1 --out " +
                          report.string() + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(report);
  if (!in) return {false, "hrgr bench wrote no report (status " + std::to_string(status) + ")"};
  const auto doc = nlohmann::json::parse(in);
  fs::remove(report);
  const double oracle = doc["oracle_ms"], parallel = doc["parallel_ms"];
  const bool identical = doc["identical"];
  return {parallel < oracle && identical,
          "hrgr bench 128x128x4, 8 threads: oracle " + fmt(oracle) + " ms, parallel " + fmt(parallel) + " ms, " +
              (identical ? "identical" : "DIFFERENT") + " (" + std::to_string(std::thread::hardware_concurrency()) +
              " hardware threads)"};
}

// ---- 11 ---------------------------------------------------------------------------------

Outcome format_round_trips() {
  std::mt19937_64 rng(11);
  const fs::path path = fs::temp_directory_path() / ("hrgr_roundtrip_" + std::to_string(::getpid()) + ".hrgt");
  std::size_t trips = 0, failures = 0;
  for (DType dtype : {DType::kFloat32, DType::kFloat64, DType::kIndex}) {
    for (std::size_t rank = 1; rank <= 4; ++rank) {
      for (int rep = 0; rep < 5; ++rep) {
        Shape shape(rank);
        for (auto& d : shape) d = 1 + rng() % 6;
        Tensor t(shape, dtype);
        std::uint64_t bits = 0;
        auto raw = [&](auto span) {
          auto* bytes = reinterpret_cast<unsigned char*>(span.data());
          for (std::size_t b = 0; b < span.size_bytes(); ++b) {
            if (b % 8 == 0) bits = rng();
            bytes[b] = static_cast<unsigned char>(bits >> (8 * (b % 8)));
          }
        };
        if (dtype == DType::kFloat32) {
          raw(t.f32());
          t.f32()[0] = -0.0f;
        } else if (dtype == DType::kFloat64) {
          raw(t.f64());  // random bit patterns include NaNs, infinities and subnormals
          t.f64()[0] = -0.0;
        } else {
          for (auto& v : t.idx()) v = 1 + static_cast<std::uint32_t>(rng() % 0xfffffffeu);
        }
        save(t, path);
        const Tensor back = load(path);
        ++trips;
        const bool same = back.dtype() == t.dtype() && back.shape() == t.shape() &&
                          encode_tensor(back) == encode_tensor(t);
        if (!same) ++failures;
      }
    }
  }
  fs::remove(path);
  return {failures == 0, std::to_string(trips) + " round trips over 3 dtypes x ranks 1-4, " +
                             std::to_string(failures) + " not bit-exact"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"adjacency oracle equivalence", adjacency_equivalence},
      {"coarse region over quadrants", coarse_over_quadrants},
      {"row-stochastic association and exact one-hot means", row_stochasticity},
      {"blob partition recovery", partition_recovery},
      {"identity contracts", identity_contracts},
      {"focal loss values", focal_values},
      {"toy trainability", toy_trainability},
      {"metric oracles", metric_oracles},
      {"parallel adjacency performance", bench_speed},
      {"hrgt round trips", format_round_trips},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << (i + 1) << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
