#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hrgr/graph.hpp"
#include "hrgr/loss.hpp"
#include "hrgr/metrics.hpp"
#include "hrgr/reasoning.hpp"
#include "hrgr/tensor.hpp"

namespace hrgr {

// ---- synthetic data ---------------------------------------------------------------

enum class SyntheticKind { kBlobs, kForgery };

SyntheticKind parse_synthetic_kind(const std::string& name);

struct SyntheticSpec {
  std::size_t h = 32;
  std::size_t w = 32;
  SyntheticKind kind = SyntheticKind::kBlobs;
  std::size_t grid_h = 4;  // blobs only
  std::size_t grid_w = 4;
  std::size_t channels = 8;  // blobs only; forgeries are RGB
  double sigma = 0.05;
  std::uint64_t seed = 0;
};

struct BlobSample {
  Tensor features;  // h x w x channels
  Tensor labels;    // h x w index, block ids in row-major block order
};

// One random vector per block plus N(0, sigma^2) noise. Block vectors are
// redrawn until every pair is more than 6 sigma apart.
BlobSample gen_blobs(const SyntheticSpec& spec);

struct ForgerySample {
  Tensor image;  // h x w x 3
  Tensor mask;   // h x w float64, 1 on the pasted support
};

// Smooth random background with a rectangle or ellipse copied from another
// location and shifted in intensity. The mask covers 2% to 30% of the image.
ForgerySample gen_forgery(const SyntheticSpec& spec);

// ---- toy model ----------------------------------------------------------------------

struct ToyConfig {
  std::size_t h = 64;
  std::size_t w = 64;
  std::size_t layers = 2;
  std::size_t regions = 16;
  std::size_t iterations = 3;
  std::size_t channels = 8;  // encoder width of every level
  std::size_t width = 0;     // node width C; 0 means the largest layer width
  std::size_t steps = 200;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.05;
  double adam_eps = 1e-8;
  std::size_t train_images = 4;
  std::size_t eval_images = 2;
  std::uint64_t seed = 0;
  bool freeze_mu = false;  // hold every mu at 0: the block contributes nothing
  GraphMode mode = GraphMode::kFull;
  std::size_t threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
};

// Pointwise encoder over a mean-pooled pyramid, the HRGR block, and a
// pointwise logistic decoder over nearest-upsampled levels.
struct ToyModel {
  std::vector<Tensor> enc_weight;  // 3 x c_i
  std::vector<Tensor> enc_bias;    // c_i
  HrgrParams hrgr;
  std::vector<Tensor> dec_weight;  // c_i x 1
  Tensor dec_bias;                 // 1
  HrgrConfig block;

  static ToyModel init(const ToyConfig& cfg, std::mt19937_64& rng);
  ToyModel zeros_like() const;
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
};

struct ToyForward {
  std::vector<Tensor> pooled;    // image pyramid
  std::vector<Tensor> encoded;   // block inputs
  HrgrTrace trace;
  std::vector<Tensor> enhanced;  // block outputs
  Tensor pred;                   // h x w probabilities
};

// 2x2 mean pooling of an h x w x c map (h, w even).
Tensor mean_pool2(const Tensor& map);

Tensor toy_forward(const ToyModel& model, const Tensor& image, ToyForward* cache = nullptr);
// Gradient of <d_pred, pred> with respect to every model tensor.
ToyModel toy_backward(const ToyModel& model, const ToyForward& cache, const Tensor& d_pred);

// Mean focal loss (alpha 0.5, gamma 2) over a batch, averaged per image.
double toy_loss(const ToyModel& model, const std::vector<ForgerySample>& batch);

struct ToyReport {
  ToyConfig config;
  std::vector<double> losses;
  EvalResult eval;
  std::vector<double> mu_grad_first_step;
  double initial_loss = 0.0;
  double final_loss = 0.0;

  nlohmann::json to_json() const;
};

// Deterministic per seed: forward, mean focal loss, reverse pass, AdamW.
// Throws NumericalError (naming the step) if the loss turns non-finite.
ToyReport train_toy(const ToyConfig& cfg, ToyModel* trained = nullptr);

std::vector<ForgerySample> toy_batch(const ToyConfig& cfg, std::uint64_t seed, std::size_t count);

// ---- adjacency workloads --------------------------------------------------------------

// Layer i is an (h >> i) x (w >> i) map (at least 1x1) with labels in
// 1..regions[i]: nearest of random sites when `voronoi`, else i.i.d. labels.
std::vector<Tensor> random_index_maps(std::size_t h, std::size_t w, std::span<const std::size_t> regions,
                                      std::uint64_t seed, bool voronoi);

struct BenchReport {
  std::size_t h = 0, w = 0, layers = 0, threads = 0, repeats = 0, nodes = 0, edges = 0;
  double oracle_ms = 0.0;    // best of `repeats`, single-threaded oracle
  double parallel_ms = 0.0;  // best of `repeats`, parallel builder
  bool identical = false;

  nlohmann::json to_json() const;
};

BenchReport bench_adjacency(std::size_t h, std::size_t w, std::size_t layers, std::size_t regions,
                            std::size_t threads, std::size_t repeats, std::uint64_t seed);

}  // namespace hrgr
