// scoup: command-line driver for the sparse-code language-field pipeline.
//
// Exit codes: 0 success, 2 configuration error, 3 data or format error,
// 4 internal failure, 5 output not writable.

#include "scoup/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

enum ExitCode : int { kOk = 0, kConfig = 2, kData = 3, kInternal = 4, kIo = 5 };

// Flags are optional so only the ones given override the config file.
struct Overrides {
  std::optional<std::string> config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::size_t> levels;
  // synth
  std::optional<std::size_t> gaussians, objects, views, dim;
  std::optional<int> width, height;
  std::optional<double> noise;
  // sparse coding / uplift
  std::optional<std::size_t> atoms, sparsity, epochs, uplift_k;
  std::optional<double> lr;
  // query
  std::optional<double> alpha, threshold;
  std::optional<int> pool;
  // bench
  std::optional<std::size_t> bench_gaussians, bench_views, bench_dim, bench_k, bench_atoms, reps;
  std::optional<int> bench_size;
  bool identity = false;
};

template <typename T>
void set_if(const std::optional<T>& v, T& dst) {
  if (v) dst = *v;
}

scoup::PipelineConfig resolve(const Overrides& o) {
  scoup::PipelineConfig c = o.config ? scoup::load_config(*o.config) : scoup::PipelineConfig{};
  set_if(o.out, c.workspace);
  set_if(o.seed, c.seed);
  set_if(o.threads, c.threads);
  set_if(o.levels, c.levels);
  set_if(o.gaussians, c.synth.gaussians);
  set_if(o.objects, c.synth.objects);
  set_if(o.views, c.synth.views);
  set_if(o.dim, c.synth.dim);
  set_if(o.width, c.synth.width);
  set_if(o.height, c.synth.height);
  set_if(o.noise, c.synth.noise_rate);
  set_if(o.atoms, c.coding.atoms);
  set_if(o.sparsity, c.coding.sparsity);
  set_if(o.epochs, c.coding.epochs);
  set_if(o.lr, c.coding.learning_rate);
  set_if(o.uplift_k, c.uplift_k);
  set_if(o.alpha, c.query.alpha);
  set_if(o.threshold, c.query.threshold);
  set_if(o.pool, c.query.pool);
  set_if(o.bench_gaussians, c.bench.gaussians);
  set_if(o.bench_views, c.bench.views);
  set_if(o.bench_dim, c.bench.dim);
  set_if(o.bench_k, c.bench.sparsity);
  set_if(o.bench_atoms, c.bench.atoms);
  set_if(o.reps, c.bench.repetitions);
  if (o.bench_size) c.bench.width = c.bench.height = *o.bench_size;
  if (o.identity) c.bench.identity_codebook = true;
  c.validate();
  return c;
}

template <typename T>
void opt(CLI::App* app, const std::string& name, std::optional<T>& dst, const std::string& help) {
  app->add_option_function<T>(name, [&dst](const T& v) { dst = v; }, help);
}

void common_flags(CLI::App* app, Overrides& o) {
  opt(app, "--config", o.config, "pipeline config (JSON)");
  opt(app, "--out", o.out, "workspace directory");
  opt(app, "--seed", o.seed, "random seed");
  opt(app, "--threads", o.threads, "worker threads");
  opt(app, "--level-count", o.levels, "number of semantic levels");
}

void coding_flags(CLI::App* app, Overrides& o) {
  opt(app, "--atoms,-L", o.atoms, "codebook size L");
  opt(app, "--sparsity,-K", o.sparsity, "code sparsity K");
  opt(app, "--epochs", o.epochs, "training epochs");
  opt(app, "--lr", o.lr, "Adam learning rate");
}

void query_flags(CLI::App* app, Overrides& o) {
  opt(app, "--alpha", o.alpha, "relevancy temperature");
  opt(app, "--pool", o.pool, "average-pooling window (odd)");
  opt(app, "--threshold", o.threshold, "mask threshold");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scoup: sparse-code 3D language fields"};
  app.require_subcommand(1);
  Overrides o;

  auto* synth = app.add_subcommand("synth", "generate a synthetic scene with ground truth");
  common_flags(synth, o);
  opt(synth, "--gaussians", o.gaussians, "Gaussian count");
  opt(synth, "--objects", o.objects, "object count");
  opt(synth, "--views", o.views, "camera count");
  opt(synth, "--width", o.width, "image width");
  opt(synth, "--height", o.height, "image height");
  opt(synth, "--dim", o.dim, "feature dimension D");
  opt(synth, "--noise", o.noise, "per-region label noise rate");

  auto* encode = app.add_subcommand("encode", "learn codebook and sparse region codes per level");
  common_flags(encode, o);
  coding_flags(encode, o);

  auto* uplift = app.add_subcommand("uplift", "uplift region codes to per-Gaussian sparse codes");
  common_flags(uplift, o);
  opt(uplift, "--uplift-k", o.uplift_k, "coefficients kept per Gaussian");

  std::size_t view = 0;
  std::string label;
  bool all = false;
  auto* query = app.add_subcommand("query", "render, decode and score one text query");
  common_flags(query, o);
  query_flags(query, o);
  query->add_option("--view", view, "camera index");
  query->add_option("--label", label, "query label");
  query->add_flag("--all", all, "evaluate every query on every view with ground truth");

  auto* bench = app.add_subcommand("bench", "time dense vs sparse uplift");
  common_flags(bench, o);
  opt(bench, "--gaussians", o.bench_gaussians, "Gaussian count");
  opt(bench, "--views", o.bench_views, "camera count");
  opt(bench, "--size", o.bench_size, "square image size");
  opt(bench, "--dim", o.bench_dim, "feature dimension D");
  opt(bench, "--sparsity,-K", o.bench_k, "sparsity K");
  opt(bench, "--atoms,-L", o.bench_atoms, "codebook size L");
  opt(bench, "--reps", o.reps, "timed repetitions");
  bench->add_flag("--identity", o.identity, "identity codebook (requires L = D)");

  std::string axis;
  std::vector<std::size_t> values;
  auto* sweep = app.add_subcommand("sweep", "encode -> uplift -> query for several L or K values");
  common_flags(sweep, o);
  coding_flags(sweep, o);
  query_flags(sweep, o);
  opt(sweep, "--uplift-k", o.uplift_k, "coefficients kept per Gaussian (L sweeps)");
  sweep->add_option("--axis", axis, "L or K")->required()->check(CLI::IsMember({"L", "K"}));
  sweep->add_option("--values", values, "axis values")->required();

  double fraction = 0.0;
  std::string mode = "lowest";
  auto* analyze = app.add_subcommand("analyze", "entropy and multi-view consistency reports");
  common_flags(analyze, o);
  analyze->add_option("--filter-fraction", fraction, "also write a field with this fraction of codes removed");
  analyze->add_option("--filter-mode", mode, "lowest or highest entropy first")
      ->check(CLI::IsMember({"lowest", "highest"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    const auto cfg = resolve(o);
    if (synth->parsed()) {
      scoup::run_synth(cfg);
    } else if (encode->parsed()) {
      scoup::run_encode(cfg);
    } else if (uplift->parsed()) {
      scoup::run_uplift(cfg);
    } else if (query->parsed()) {
      if (all) {
        scoup::run_query_all(cfg);
      } else {
        if (label.empty()) throw scoup::ConfigError("query needs --label (or --all)");
        scoup::run_query(cfg, view, label);
      }
    } else if (bench->parsed()) {
      scoup::run_bench(cfg);
    } else if (sweep->parsed()) {
      scoup::run_sweep(cfg, axis, values);
    } else if (analyze->parsed()) {
      scoup::AnalyzeOptions a;
      a.filter_fraction = fraction;
      a.mode = mode == "highest" ? scoup::EntropyMode::Highest : scoup::EntropyMode::Lowest;
      scoup::run_analyze(cfg, a);
    }
  } catch (const scoup::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const scoup::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kData;
  } catch (const scoup::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const scoup::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kOk;
}
