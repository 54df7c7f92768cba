// hrgr: command-line front end over the library.
//
// Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure
// (non-finite values, failed gradient check, oracle mismatch).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hrgr/harness.hpp"
#include "hrgr/metrics.hpp"
#include "hrgr/ops.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hrgr;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kNumerical = 2;

std::size_t default_threads() {
  const char* env = std::getenv("HRGR_THREADS");
  if (!env || !*env) return 1;
  try {
    std::size_t used = 0;
    const unsigned long value = std::stoul(env, &used);
    if (used == std::string(env).size() && value >= 1) return value;
  } catch (const std::exception&) {
  }
  throw ValidationError(std::string("HRGR_THREADS must be a positive integer, got '") + env + "'");
}

bool on_off(const std::string& flag, const std::string& value) {
  if (value == "on") return true;
  if (value == "off") return false;
  throw ValidationError(flag + " expects on|off, got '" + value + "'");
}

void print_config(const std::string& command, const json& cfg) {
  std::cerr << "hrgr " << command << " config " << cfg.dump() << '\n';
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

Tensor load_features(const fs::path& path) {
  Tensor t = load(path).to_f64();
  if (t.rank() != 3) throw ShapeError(path.string() + ": expected an h x w x c feature map, got " + to_string(t.shape()));
  return t;
}

std::size_t default_reduced(std::size_t augmented_channels) {
  if (augmented_channels < 2) throw ValidationError("partition needs at least 2 input channels for a reducer");
  return std::min<std::size_t>(16, augmented_channels - 1);
}

// ---- partition ------------------------------------------------------------------------

struct PartitionArgs {
  std::string input, out_assoc, out_centers, out_index, coords = "on", mode = "dfp", weight, bias,
      reducer = "truncate";
  std::size_t regions = 64, iters = 5, reduced = 0;
  std::uint64_t seed = 0;
};

int run_partition(const PartitionArgs& a) {
  const Tensor f = load_features(a.input);
  DfpConfig cfg;
  cfg.regions = a.regions;
  cfg.iterations = a.iters;
  cfg.use_coords = on_off("--coords", a.coords);
  if (a.mode == "grid") {
    cfg.mode = PartitionMode::kRegularGrid;
  } else if (a.mode != "dfp") {
    throw ValidationError("--mode expects dfp|grid, got '" + a.mode + "'");
  }
  cfg.validate();

  const std::size_t in = f.dim(2) + (cfg.use_coords ? 2 : 0);
  ChannelReducer reducer;
  if (!a.weight.empty()) {
    reducer.weight = load(a.weight).to_f64();
    reducer.bias = a.bias.empty() ? Tensor({reducer.weight.dim(1)}) : load(a.bias).to_f64();
  } else if (a.reducer == "random") {
    std::mt19937_64 rng(a.seed);
    reducer = ChannelReducer::init(in, a.reduced ? a.reduced : default_reduced(in), rng);
  } else if (a.reducer == "truncate") {
    reducer = ChannelReducer::truncation(in, a.reduced ? a.reduced : default_reduced(in));
  } else {
    throw ValidationError("--reducer expects truncate|random, got '" + a.reducer + "'");
  }
  print_config("partition", {{"input", a.input},
                             {"shape", f.shape()},
                             {"regions", cfg.regions},
                             {"iters", cfg.iterations},
                             {"coords", cfg.use_coords},
                             {"mode", a.mode},
                             {"reducer", a.weight.empty() ? a.reducer : a.weight},
                             {"reduced", reducer.out_channels()},
                             {"seed", a.seed}});

  const DfpResult r = run_dfp(f, reducer, cfg);
  if (!all_finite(r.assoc) || !all_finite(r.centers)) throw NumericalError("partition: non-finite association");
  if (!a.out_assoc.empty()) save(r.assoc, a.out_assoc);
  if (!a.out_centers.empty()) save(r.centers, a.out_centers);
  if (!a.out_index.empty()) save(r.labels, a.out_index);
  std::cout << json{{"elements", r.assoc.dim(0)}, {"regions", r.assoc.dim(1)}}.dump() << '\n';
  return kOk;
}

// ---- graph ----------------------------------------------------------------------------

struct GraphArgs {
  std::vector<std::string> index;
  std::vector<std::size_t> regions;
  bool oracle = false, parallel = false;
  std::size_t threads = 1;
  std::string self_loops = "on", hierarchy = "inter", out, edges;
};

int run_graph(const GraphArgs& a) {
  if (a.oracle && a.parallel) throw ValidationError("--oracle and --parallel are mutually exclusive");
  if (a.regions.size() != a.index.size()) {
    throw ValidationError("--regions needs one count per index map (" + std::to_string(a.index.size()) + ")");
  }
  if (a.threads < 1) throw ValidationError("--threads must be >= 1");
  AdjacencyOptions opts;
  opts.self_loops = on_off("--self-loops", a.self_loops);
  if (a.hierarchy == "intra") {
    opts.hierarchy = Hierarchy::kIntraLayer;
  } else if (a.hierarchy != "inter") {
    throw ValidationError("--hierarchy expects inter|intra, got '" + a.hierarchy + "'");
  }
  std::vector<Tensor> maps;
  for (const auto& path : a.index) {
    Tensor t = load(path);
    if (t.dtype() != DType::kIndex) throw ValidationError(path + ": index maps must have the index dtype");
    maps.push_back(std::move(t));
  }
  const bool use_oracle = a.oracle;
  print_config("graph", {{"index", a.index},
                         {"regions", a.regions},
                         {"builder", use_oracle ? "oracle" : "parallel"},
                         {"threads", a.threads},
                         {"self_loops", opts.self_loops},
                         {"hierarchy", a.hierarchy}});

  const StackedIndexVolume stacked = stack_index_maps(maps, a.regions);
  const AdjacencyMatrix adj =
      use_oracle ? build_adjacency_oracle(stacked, opts) : build_adjacency_parallel(stacked, a.threads, opts);
  if (!a.out.empty()) save(adj.to_tensor(), a.out);
  if (!a.edges.empty()) save(adj.edge_list(), a.edges);
  std::cout << json{{"nodes", adj.order()}, {"edges", adj.edge_count()}}.dump() << '\n';
  return kOk;
}

// ---- reason ---------------------------------------------------------------------------

struct ReasonArgs {
  std::vector<std::string> features;
  std::string params, init_params, mode = "full", out_prefix = "out_", self_loops = "on", coords = "on";
  std::vector<std::size_t> regions;
  std::size_t rounds = 1, iters = 5, width = 0, reduced = 0, threads = 1;
  std::uint64_t seed = 0;
};

void write_params(const fs::path& dir, const HrgrParams& params, bool use_coords) {
  fs::create_directories(dir);
  json files = json::object();
  for (const auto& [name, t] : params.named()) {
    const std::string file = name + ".hrgt";
    save(*t, dir / file);
    files[name] = file;
  }
  write_json(dir / "manifest.json", {{"layer_channels", params.layer_channels()},
                                     {"reduced_channels", params.reduced_channels()},
                                     {"width", params.width()},
                                     {"coords", use_coords},
                                     {"tensors", files}});
}

// The reducer input width depends on coordinate augmentation, so the
// manifest records it and the block follows.
HrgrParams read_params(const fs::path& dir, bool& use_coords) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ValidationError("no manifest.json in " + dir.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw ValidationError("manifest.json: " + std::string(e.what()));
  }
  const auto channels = manifest.at("layer_channels").get<std::vector<std::size_t>>();
  const auto reduced = manifest.at("reduced_channels").get<std::vector<std::size_t>>();
  const auto width = manifest.at("width").get<std::size_t>();
  if (channels.size() != reduced.size() || channels.empty()) {
    throw ValidationError("manifest.json: layer_channels and reduced_channels disagree");
  }
  use_coords = manifest.value("coords", true);
  // Build a correctly shaped set, then overwrite every tensor from disk.
  std::mt19937_64 rng(0);
  HrgrParams params = HrgrParams::init(channels, reduced, width, rng, use_coords);
  const auto& files = manifest.at("tensors");
  for (auto& [name, t] : params.named()) {
    if (!files.contains(name)) throw ValidationError("manifest.json: missing tensor '" + name + "'");
    Tensor loaded = load(dir / files.at(name).get<std::string>()).to_f64();
    if (loaded.shape() != t->shape()) {
      throw ShapeError("params " + name + ": expected " + to_string(t->shape()) + ", file has " +
                       to_string(loaded.shape()));
    }
    *t = std::move(loaded);
  }
  return params;
}

int run_reason(const ReasonArgs& a) {
  std::vector<Tensor> features;
  for (const auto& path : a.features) features.push_back(load_features(path));
  HrgrConfig cfg;
  cfg.dfp.iterations = a.iters;
  cfg.rounds = a.rounds;
  cfg.threads = a.threads;
  cfg.self_loops = on_off("--self-loops", a.self_loops);
  cfg.dfp.use_coords = on_off("--coords", a.coords);
  cfg.apply(parse_graph_mode(a.mode));
  if (!a.regions.empty()) {
    if (a.regions.size() == 1) {
      cfg.dfp.regions = a.regions[0];
    } else if (a.regions.size() == features.size()) {
      cfg.regions = a.regions;
    } else {
      throw ValidationError("--regions needs 1 or " + std::to_string(features.size()) + " values");
    }
  }

  HrgrParams params;
  if (!a.init_params.empty()) {
    std::vector<std::size_t> channels, reduced;
    std::size_t widest = 0;
    for (const auto& f : features) {
      channels.push_back(f.dim(2));
      widest = std::max(widest, f.dim(2));
      const std::size_t in = f.dim(2) + (cfg.dfp.use_coords ? 2 : 0);
      reduced.push_back(a.reduced ? a.reduced : default_reduced(in));
    }
    std::mt19937_64 rng(a.seed);
    params = HrgrParams::init(channels, reduced, a.width ? a.width : widest, rng, cfg.dfp.use_coords);
    write_params(a.init_params, params, cfg.dfp.use_coords);
  } else if (!a.params.empty()) {
    params = read_params(a.params, cfg.dfp.use_coords);
  } else {
    throw ValidationError("reason needs --params <dir> or --init-params <dir>");
  }
  print_config("reason", {{"features", a.features},
                          {"params", a.params.empty() ? a.init_params : a.params},
                          {"mode", a.mode},
                          {"rounds", cfg.rounds},
                          {"iters", cfg.dfp.iterations},
                          {"regions", cfg.regions.empty() ? std::vector<std::size_t>{cfg.dfp.regions} : cfg.regions},
                          {"threads", cfg.threads},
                          {"coords", cfg.dfp.use_coords},
                          {"width", params.width()}});

  const HrgrOutput out = hrgr_block(features, params, cfg);
  for (std::size_t i = 0; i < out.features.size(); ++i) {
    if (!all_finite(out.features[i])) throw NumericalError("reason: non-finite output for layer " + std::to_string(i));
    save(out.features[i], a.out_prefix + "features" + std::to_string(i) + ".hrgt");
    save(out.labels[i], a.out_prefix + "index" + std::to_string(i) + ".hrgt");
  }
  save(out.adjacency.to_tensor(), a.out_prefix + "adjacency.hrgt");
  std::cout << json{{"layers", out.features.size()},
                    {"nodes", out.adjacency.order()},
                    {"edges", out.adjacency.edge_count()}}
                   .dump()
            << '\n';
  return kOk;
}

// ---- eval / synth / train-toy ---------------------------------------------------------

int run_eval(const std::string& scores_path, const std::string& labels_path) {
  const Tensor scores = load(scores_path).to_f64();
  const Tensor labels = load(labels_path);
  print_config("eval", {{"scores", scores_path}, {"labels", labels_path}});
  const EvalResult r = evaluate(scores, labels);
  std::cout << json{{"auc", r.auc}, {"f1", r.f1_eer}, {"eer_threshold", r.eer_threshold}}.dump() << '\n';
  return kOk;
}

struct SynthArgs {
  std::string kind = "blobs", out_prefix = "synth_";
  std::size_t h = 32, w = 32, grid = 4, channels = 8;
  double sigma = 0.05;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  SyntheticSpec spec;
  spec.kind = parse_synthetic_kind(a.kind);
  spec.h = a.h;
  spec.w = a.w;
  spec.grid_h = spec.grid_w = a.grid;
  spec.channels = a.channels;
  spec.sigma = a.sigma;
  spec.seed = a.seed;
  print_config("synth", {{"kind", a.kind},
                         {"h", a.h},
                         {"w", a.w},
                         {"grid", a.grid},
                         {"channels", a.channels},
                         {"sigma", a.sigma},
                         {"seed", a.seed}});
  if (spec.kind == SyntheticKind::kBlobs) {
    const BlobSample s = gen_blobs(spec);
    save(s.features, a.out_prefix + "features.hrgt");
    save(s.labels, a.out_prefix + "labels.hrgt");
  } else {
    const ForgerySample s = gen_forgery(spec);
    save(s.image, a.out_prefix + "image.hrgt");
    save(s.mask, a.out_prefix + "mask.hrgt");
  }
  return kOk;
}

int run_train_toy(ToyConfig cfg, const std::string& mode, const std::string& report_path) {
  cfg.mode = parse_graph_mode(mode);
  cfg.validate();
  print_config("train-toy", cfg.to_json());
  const ToyReport report = train_toy(cfg);
  if (!report_path.empty()) write_json(report_path, report.to_json());
  std::cout << json{{"initial_loss", report.initial_loss},
                    {"final_loss", report.final_loss},
                    {"auc", report.eval.auc},
                    {"f1", report.eval.f1_eer},
                    {"eer_threshold", report.eval.eer_threshold}}
                   .dump()
            << '\n';
  return kOk;
}

// ---- gradcheck / bench ----------------------------------------------------------------

int run_gradcheck_cmd(const std::string& op, std::uint64_t seed, double h, double tol, const std::string& json_path) {
  GradCheckOptions opts;
  opts.h = h;
  opts.tol = tol;
  opts.seed = seed;
  print_config("gradcheck", {{"op", op}, {"seed", seed}, {"h", h}, {"tol", tol}});
  const auto reports = run_gradcheck(op, seed, opts);
  std::cout << format_reports(reports);
  if (!json_path.empty()) {
    std::ofstream out(json_path);
    if (!out) throw ValidationError("cannot write " + json_path);
    out << reports_to_json(reports) << '\n';
  }
  return all_pass(reports) ? kOk : kNumerical;
}

int run_bench(std::size_t h, std::size_t w, std::size_t layers, std::size_t regions, std::size_t threads,
              std::size_t repeats, std::uint64_t seed, const std::string& out) {
  print_config("bench", {{"h", h},
                         {"w", w},
                         {"layers", layers},
                         {"regions", regions},
                         {"threads", threads},
                         {"repeats", repeats},
                         {"seed", seed}});
  const BenchReport report = bench_adjacency(h, w, layers, regions, threads, repeats, seed);
  const json doc = report.to_json();
  if (!out.empty()) write_json(out, doc);
  std::cout << doc.dump(2) << '\n';
  return report.identical ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hrgr: hierarchical region-aware graph reasoning kernels"};
  app.require_subcommand(0, 1);
  // subcommands take --h/--w for heights, so help is long-form only
  app.set_help_flag("--help", "print this help and exit");

  std::size_t threads = 1;
  try {
    threads = default_threads();
  } catch (const ValidationError& e) {
    std::cerr << "hrgr: " << e.what() << '\n';
    return kInvalid;
  }

  PartitionArgs pa;
  auto* partition = app.add_subcommand("partition", "soft clustering of one feature map");
  partition->add_option("--input", pa.input, "h x w x c feature map (.hrgt)")->required();
  partition->add_option("--regions", pa.regions, "region count m")->capture_default_str();
  partition->add_option("--iters", pa.iters, "clustering iterations T")->capture_default_str();
  partition->add_option("--coords", pa.coords, "append x/y coordinates: on|off")->capture_default_str();
  partition->add_option("--mode", pa.mode, "dfp|grid")->capture_default_str();
  partition->add_option("--reduced", pa.reduced, "reduced width c'' (default min(16, c'-1))");
  partition->add_option("--reducer", pa.reducer, "untrained reducer when no --weight: truncate|random")
      ->capture_default_str();
  partition->add_option("--weight", pa.weight, "trained reducer weight c' x c'' (.hrgt)");
  partition->add_option("--bias", pa.bias, "reducer bias c'' (.hrgt)");
  partition->add_option("--seed", pa.seed, "seed for --reducer random")->capture_default_str();
  partition->add_option("--out-assoc", pa.out_assoc, "n x m association (.hrgt)");
  partition->add_option("--out-centers", pa.out_centers, "m x c'' centers (.hrgt)");
  partition->add_option("--out-index", pa.out_index, "h x w hard labels (.hrgt)");

  GraphArgs ga;
  ga.threads = threads;
  auto* graph = app.add_subcommand("graph", "hierarchical adjacency from index maps");
  graph->add_option("--index", ga.index, "index maps, finest first (.hrgt)")->required()->expected(1, -1);
  graph->add_option("--regions", ga.regions, "region count per map")->required()->delimiter(',');
  graph->add_flag("--oracle", ga.oracle, "use the brute-force oracle");
  graph->add_flag("--parallel", ga.parallel, "use the parallel builder (default)");
  graph->add_option("--threads", ga.threads, "worker threads (default HRGR_THREADS or 1)");
  graph->add_option("--self-loops", ga.self_loops, "on|off")->capture_default_str();
  graph->add_option("--hierarchy", ga.hierarchy, "inter|intra")->capture_default_str();
  graph->add_option("--out", ga.out, "M x M float64 0/1 adjacency (.hrgt)");
  graph->add_option("--edges", ga.edges, "E x 2 edge list of 1-based node pairs (.hrgt)");

  ReasonArgs ra;
  ra.threads = threads;
  auto* reason = app.add_subcommand("reason", "run the full block on a feature pyramid");
  reason->add_option("--features", ra.features, "feature maps, finest first (.hrgt)")->required()->expected(1, -1);
  auto* params_opt = reason->add_option("--params", ra.params, "parameter directory with manifest.json");
  auto* init_opt = reason->add_option("--init-params", ra.init_params, "write fresh random parameters here and use them");
  params_opt->excludes(init_opt);
  reason->add_option("--rounds", ra.rounds, "message-passing rounds")->capture_default_str();
  reason->add_option("--mode", ra.mode, "full|grid|intra|fc")->capture_default_str();
  reason->add_option("--regions", ra.regions, "region count, or one per layer")->delimiter(',');
  reason->add_option("--iters", ra.iters, "clustering iterations T")->capture_default_str();
  reason->add_option("--self-loops", ra.self_loops, "on|off")->capture_default_str();
  reason->add_option("--coords", ra.coords, "coordinates for --init-params: on|off (--params: from manifest)")
      ->capture_default_str();
  reason->add_option("--width", ra.width, "node width C for --init-params (default widest layer)");
  reason->add_option("--reduced", ra.reduced, "reduced width c'' for --init-params");
  reason->add_option("--seed", ra.seed, "seed for --init-params")->capture_default_str();
  reason->add_option("--threads", ra.threads, "adjacency threads (default HRGR_THREADS or 1)");
  reason->add_option("--out-prefix", ra.out_prefix, "output file prefix")->capture_default_str();

  std::string scores_path, labels_path;
  auto* eval = app.add_subcommand("eval", "pixel AUC and F1 at the EER threshold");
  eval->add_option("--scores", scores_path, "prediction scores (.hrgt)")->required();
  eval->add_option("--labels", labels_path, "0/1 ground truth (.hrgt)")->required();

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "synthetic blobs or forgery images");
  synth->add_option("--kind", sa.kind, "blobs|forgery")->capture_default_str();
  synth->add_option("--h", sa.h)->capture_default_str();
  synth->add_option("--w", sa.w)->capture_default_str();
  synth->add_option("--grid", sa.grid, "blocks per side (blobs)")->capture_default_str();
  synth->add_option("--channels", sa.channels, "feature channels (blobs)")->capture_default_str();
  synth->add_option("--sigma", sa.sigma, "noise level")->capture_default_str();
  synth->add_option("--seed", sa.seed)->capture_default_str();
  synth->add_option("--out-prefix", sa.out_prefix)->capture_default_str();

  ToyConfig tc;
  tc.threads = threads;
  std::string toy_mode = "full", report_path;
  auto* toy = app.add_subcommand("train-toy", "train the toy detector on synthetic forgeries");
  toy->add_option("--steps", tc.steps)->capture_default_str();
  toy->add_option("--lr", tc.lr)->capture_default_str();
  toy->add_option("--seed", tc.seed)->capture_default_str();
  toy->add_option("--h", tc.h)->capture_default_str();
  toy->add_option("--w", tc.w)->capture_default_str();
  toy->add_option("--layers", tc.layers, "pyramid levels k")->capture_default_str();
  toy->add_option("--regions", tc.regions, "regions per layer m")->capture_default_str();
  toy->add_option("--iters", tc.iterations, "clustering iterations T")->capture_default_str();
  toy->add_option("--channels", tc.channels, "encoder width")->capture_default_str();
  toy->add_option("--width", tc.width, "node width C (0: widest layer)")->capture_default_str();
  toy->add_option("--train-images", tc.train_images)->capture_default_str();
  toy->add_option("--eval-images", tc.eval_images)->capture_default_str();
  toy->add_flag("--freeze-mu", tc.freeze_mu, "hold every mu at 0 (block disabled)");
  toy->add_option("--mode", toy_mode, "full|grid|intra|fc")->capture_default_str();
  toy->add_option("--threads", tc.threads, "adjacency threads (default HRGR_THREADS or 1)");
  toy->add_option("--report", report_path, "report JSON path");

  std::string gc_op = "all", gc_json;
  std::uint64_t gc_seed = 0;
  double gc_h = 1e-5, gc_tol = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every hand-written VJP");
  gradcheck->add_option("--op", gc_op, "op name or all")->capture_default_str();
  gradcheck->add_option("--seed", gc_seed)->capture_default_str();
  gradcheck->add_option("--h", gc_h, "step size")->capture_default_str();
  gradcheck->add_option("--tol", gc_tol, "relative tolerance")->capture_default_str();
  gradcheck->add_option("--json", gc_json, "also write the reports as JSON");

  std::size_t bh = 128, bw = 128, blayers = 4, bregions = 64, bthreads = threads, brepeats = 3;
  std::uint64_t bseed = 0;
  std::string bout;
  auto* bench = app.add_subcommand("bench", "oracle vs parallel adjacency timing");
  bench->add_option("--h", bh)->capture_default_str();
  bench->add_option("--w", bw)->capture_default_str();
  bench->add_option("--layers", blayers)->capture_default_str();
  bench->add_option("--regions", bregions, "regions per layer")->capture_default_str();
  bench->add_option("--threads", bthreads, "parallel builder threads (default HRGR_THREADS or 1)");
  bench->add_option("--repeats", brepeats, "timed runs, best kept")->capture_default_str();
  bench->add_option("--seed", bseed)->capture_default_str();
  bench->add_option("--out", bout, "report JSON path");

  if (argc < 2) {
    std::cerr << app.help();
    return kInvalid;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  try {
    if (*partition) return run_partition(pa);
    if (*graph) return run_graph(ga);
    if (*reason) return run_reason(ra);
    if (*eval) return run_eval(scores_path, labels_path);
    if (*synth) return run_synth(sa);
    if (*toy) return run_train_toy(tc, toy_mode, report_path);
    if (*gradcheck) return run_gradcheck_cmd(gc_op, gc_seed, gc_h, gc_tol, gc_json);
    if (*bench) return run_bench(bh, bw, blayers, bregions, bthreads, brepeats, bseed, bout);
    std::cerr << app.help();
    return kInvalid;
  } catch (const NumericalError& e) {
    std::cerr << "hrgr: numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const ValidationError& e) {
    std::cerr << "hrgr: invalid input: " << e.what() << '\n';
    return kInvalid;
  } catch (const json::exception& e) {
    std::cerr << "hrgr: invalid input: " << e.what() << '\n';
    return kInvalid;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "hrgr: invalid input: " << e.what() << '\n';
    return kInvalid;
  }
}
