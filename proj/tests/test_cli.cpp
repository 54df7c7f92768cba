// Drives the hrgr binary end to end and re-reads every file it writes.
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "hrgr/dfp.hpp"
#include "hrgr/graph.hpp"
#include "hrgr/harness.hpp"
#include "hrgr/metrics.hpp"
#include "hrgr/tensor.hpp"

namespace fs = std::filesystem;
using namespace hrgr;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("hrgr_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string at(const std::string& name) { return (scratch() / name).string(); }

// stdout is captured; stderr (the resolved config) goes to err.log
Run hrgr_run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " HRGR_CLI_PATH " " + args + " 2>" + at("err.log");
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string stderr_text() {
  std::ifstream in(at("err.log"));
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors") {
  CHECK(hrgr_run("").code == 1);
  CHECK(hrgr_run("partition --bogus 1").code == 1);
  CHECK(hrgr_run("frobnicate").code == 1);
  CHECK(hrgr_run("--help").code == 0);
  CHECK(hrgr_run("partition").code == 1);  // --input is required
  CHECK(hrgr_run("eval --scores " + at("missing.hrgt") + " --labels " + at("missing.hrgt")).code == 1);
  {
    std::ofstream junk(at("junk.hrgt"), std::ios::binary);
    junk << "not a tensor";
  }
  CHECK(hrgr_run("partition --input " + at("junk.hrgt")).code == 1);
  CHECK(stderr_text().find("hrgr: invalid input") != std::string::npos);
  CHECK(hrgr_run("bench --h 8 --w 8", "HRGR_THREADS=zero").code == 1);
}

TEST_CASE("numerical failures exit with 2") {
  Tensor f = Tensor::filled({4, 4, 3}, 1e308);
  f.f64()[0] = -1e308;
  save(f, at("overflow.hrgt"));
  CHECK(hrgr_run("partition --input " + at("overflow.hrgt") + " --regions 4").code == 2);
  CHECK(stderr_text().find("hrgr: numerical error") != std::string::npos);
  CHECK(hrgr_run("reason --features " + at("overflow.hrgt") + " --regions 4 --init-params " + at("overflow_params"))
            .code == 2);
}

TEST_CASE("synth and partition") {
  const std::string prefix = at("blobs_");
  REQUIRE(hrgr_run("synth --kind blobs --h 32 --w 32 --grid 4 --channels 8 --sigma 0.05 --seed 4 --out-prefix " + prefix)
              .code == 0);
  const Tensor features = load(prefix + "features.hrgt");
  const Tensor labels = load(prefix + "labels.hrgt");
  CHECK(features.shape() == Shape{32, 32, 8});
  CHECK(labels.dtype() == DType::kIndex);

  const Run r = hrgr_run("partition --input " + prefix + "features.hrgt --regions 16 --iters 5 --out-assoc " +
                         at("assoc.hrgt") + " --out-centers " + at("centers.hrgt") + " --out-index " +
                         at("index.hrgt"));
  REQUIRE(r.code == 0);
  const json summary = json::parse(r.out);
  CHECK(summary["elements"] == 1024);
  CHECK(summary["regions"] == 16);
  CHECK(stderr_text().find("hrgr partition config") != std::string::npos);

  const Tensor assoc = load(at("assoc.hrgt"));
  CHECK(assoc.shape() == Shape{1024, 16});
  for (std::size_t i = 0; i < 1024; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 16; ++j) s += assoc(i, j);
    CHECK(std::abs(s - 1.0) < 1e-10);
  }
  CHECK(load(at("centers.hrgt")).shape() == Shape{16, 9});  // min(16, 8 + 2 - 1)
  const Tensor index = load(at("index.hrgt"));
  CHECK(index.shape() == Shape{32, 32});
  CHECK(adjusted_rand_index(index.reshaped({1024}), labels.reshaped({1024})) >= 0.9);

  // same computation through the library
  DfpConfig cfg;
  cfg.regions = 16;
  cfg.iterations = 5;
  const DfpResult lib = run_dfp(features, ChannelReducer::truncation(10, 9), cfg);
  CHECK(max_abs_diff(lib.assoc, assoc) == 0.0);

  CHECK(hrgr_run("partition --input " + prefix + "features.hrgt --regions 16 --mode grid --out-index " +
                 at("grid_index.hrgt"))
            .code == 0);
  CHECK(load(at("grid_index.hrgt")).shape() == Shape{32, 32});
  CHECK(hrgr_run("partition --input " + prefix + "features.hrgt --mode kmeans").code == 1);
  CHECK(hrgr_run("partition --input " + prefix + "features.hrgt --reducer random --seed 2").code == 0);
}

TEST_CASE("graph") {
  const std::vector<std::size_t> regions{6, 3};
  const auto maps = random_index_maps(16, 16, regions, 5, true);
  save(maps[0], at("fine.hrgt"));
  save(maps[1], at("coarse.hrgt"));
  const std::string base = "graph --index " + at("fine.hrgt") + " " + at("coarse.hrgt") + " --regions 6,3";
  const Run oracle = hrgr_run(base + " --oracle --out " + at("adj_oracle.hrgt"));
  const Run par = hrgr_run(base + " --parallel --threads 4 --out " + at("adj_par.hrgt") + " --edges " + at("edges.hrgt"));
  REQUIRE(oracle.code == 0);
  REQUIRE(par.code == 0);
  CHECK(oracle.out == par.out);
  const Tensor a = load(at("adj_oracle.hrgt"));
  CHECK(a.shape() == Shape{9, 9});
  CHECK(max_abs_diff(a, load(at("adj_par.hrgt"))) == 0.0);

  const AdjacencyMatrix want = build_adjacency_oracle(stack_index_maps(maps, regions));
  CHECK(AdjacencyMatrix::from_tensor(a) == want);
  const Tensor edges = load(at("edges.hrgt"));
  CHECK(edges.dtype() == DType::kIndex);
  CHECK(edges.dim(0) == json::parse(par.out)["edges"].get<std::size_t>());
  CHECK(edges.dim(1) == 2);

  CHECK(hrgr_run(base + " --self-loops off --hierarchy intra").code == 0);
  CHECK(hrgr_run(base + " --oracle --parallel").code == 1);
  CHECK(hrgr_run("graph --index " + at("fine.hrgt") + " --regions 6,3").code == 1);
  CHECK(hrgr_run(base + " --hierarchy sideways").code == 1);
}

TEST_CASE("reason with fresh and saved parameters") {
  Tensor f0({16, 16, 4}), f1({8, 8, 6});
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> uni(-1, 1);
  for (auto& v : f0.f64()) v = uni(rng);
  for (auto& v : f1.f64()) v = uni(rng);
  save(f0, at("f0.hrgt"));
  save(f1, at("f1.hrgt"));
  const std::string feats = "reason --features " + at("f0.hrgt") + " " + at("f1.hrgt") + " --regions 8,4 --iters 3";
  const fs::path params = scratch() / "params";
  const Run fresh = hrgr_run(feats + " --init-params " + params.string() + " --seed 3 --out-prefix " + at("first_"));
  REQUIRE(fresh.code == 0);
  CHECK(fs::exists(params / "manifest.json"));
  const Tensor out0 = load(at("first_features0.hrgt")), out1 = load(at("first_features1.hrgt"));
  CHECK(out0.shape() == f0.shape());
  CHECK(out1.shape() == f1.shape());
  CHECK(load(at("first_index0.hrgt")).shape() == Shape{16, 16});
  CHECK(load(at("first_adjacency.hrgt")).shape() == Shape{12, 12});

  const Run saved = hrgr_run(feats + " --params " + params.string() + " --out-prefix " + at("second_"));
  REQUIRE(saved.code == 0);
  CHECK(fresh.out == saved.out);
  CHECK(max_abs_diff(out0, load(at("second_features0.hrgt"))) == 0.0);
  CHECK(max_abs_diff(out1, load(at("second_features1.hrgt"))) == 0.0);

  CHECK(hrgr_run(feats + " --params " + params.string() + " --init-params " + at("other")).code == 1);
  CHECK(hrgr_run(feats + " --params " + at("nowhere")).code == 1);
}

TEST_CASE("eval") {
  const Tensor scores({6}, std::vector<double>{0.9, 0.2, 0.7, 0.4, 0.6, 0.1});
  const Tensor labels({6}, std::vector<double>{1, 0, 1, 0, 0, 0});
  save(scores, at("scores.hrgt"));
  save(labels, at("labels.hrgt"));
  const Run r = hrgr_run("eval --scores " + at("scores.hrgt") + " --labels " + at("labels.hrgt"));
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  const EvalResult want = evaluate(scores, labels);
  CHECK(j["auc"].get<double>() == want.auc);
  CHECK(j["f1"].get<double>() == want.f1_eer);
  CHECK(j["eer_threshold"].get<double>() == want.eer_threshold);
  save(Tensor::filled({6}, 0.0), at("one_class.hrgt"));
  CHECK(hrgr_run("eval --scores " + at("scores.hrgt") + " --labels " + at("one_class.hrgt")).code == 1);
}

TEST_CASE("synth forgery") {
  REQUIRE(hrgr_run("synth --kind forgery --h 24 --w 40 --seed 2 --out-prefix " + at("forgery_")).code == 0);
  CHECK(load(at("forgery_image.hrgt")).shape() == Shape{24, 40, 3});
  CHECK(load(at("forgery_mask.hrgt")).shape() == Shape{24, 40});
  CHECK(hrgr_run("synth --kind clouds").code == 1);
}

TEST_CASE("train-toy") {
  const Run r = hrgr_run("train-toy --steps 3 --h 16 --w 16 --regions 4 --iters 2 --channels 4 --train-images 1 "
                         "--eval-images 1 --report " + at("toy.json"));
  REQUIRE(r.code == 0);
  std::ifstream in(at("toy.json"));
  const json report = json::parse(in);
  CHECK(report["losses"].size() == 3);
  CHECK(report["config"]["steps"] == 3);
  CHECK(json::parse(r.out)["final_loss"] == report["final_loss"]);
  CHECK(hrgr_run("train-toy --h 15 --steps 1").code == 1);
}

TEST_CASE("gradcheck") {
  const Run r = hrgr_run("gradcheck --op all --seed 1 --json " + at("grad.json"));
  CHECK(r.code == 0);
  std::ifstream in(at("grad.json"));
  const json reports = json::parse(in);
  CHECK(reports.size() > 0);
  CHECK(hrgr_run("gradcheck --op teleport").code == 1);
}

TEST_CASE("bench") {
  const Run r = hrgr_run("bench --h 32 --w 32 --layers 2 --regions 8 --repeats 1 --out " + at("bench.json"),
                         "HRGR_THREADS=2");
  REQUIRE(r.code == 0);
  std::ifstream in(at("bench.json"));
  const json report = json::parse(in);
  CHECK(report["identical"] == true);
  CHECK(report["threads"] == 2);
  fs::remove_all(scratch());
}

}
