#pragma once

// File-driven pipeline stages behind the CLI: synth, encode, uplift, query,
// bench, sweep, analyze. All paths are resolved against the workspace
// directory unless absolute.

#include "scoup/analysis.hpp"
#include "scoup/common.hpp"
#include "scoup/image_io.hpp"
#include "scoup/rasterizer.hpp"
#include "scoup/region_io.hpp"
#include "scoup/scene.hpp"
#include "scoup/semantic_query.hpp"
#include "scoup/sparse_coding.hpp"
#include "scoup/synth.hpp"
#include "scoup/uplift.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace scoup {

namespace fs = std::filesystem;

struct QueryParams {
  double alpha = 10.0;
  int pool = 7;
  double threshold = 0.6;
};

struct BenchConfig {
  std::size_t gaussians = 100000;
  std::size_t views = 20;
  int width = 256;
  int height = 256;
  std::size_t dim = 512;
  std::size_t sparsity = 4;
  std::size_t atoms = 64;
  std::size_t repetitions = 5;
  bool identity_codebook = false;
};

struct PipelineConfig {
  std::string workspace = "scoup_out";
  // Relative to the workspace.
  std::string scene = "scene.ply";
  std::string cameras = "cameras.json";
  std::string regions = "regions";  // level{l}/view{v}.rmap|.feat
  std::string queries = "queries.json";
  std::string gt = "gt";            // view{v}/{label}.pgm
  std::string tracks = "tracks.json";
  std::string codes = "codes";      // level{l}.cbk, level{l}_loss.csv
  std::string field = "field.scup";
  std::string results = "results";

  std::size_t levels = 3;
  int threads = 1;
  std::uint64_t seed = 0;

  SynthesisSpec synth;
  SparseCodingConfig coding;
  std::size_t uplift_k = 4;
  QueryParams query;
  BenchConfig bench;

  fs::path path(const std::string& p) const {
    const fs::path q(p);
    return q.is_absolute() ? q : fs::path(workspace) / q;
  }

  void validate() const {
    if (levels < 1) throw ConfigError("level count must be >= 1");
    if (threads < 1) throw ConfigError("thread count must be >= 1");
    coding.validate();
    if (uplift_k < 1) throw ConfigError("uplift K must be >= 1");
    if (query.pool < 1 || query.pool % 2 == 0) throw ConfigError("pool size must be odd and >= 1");
    if (!(query.alpha > 0)) throw ConfigError("alpha must be positive");
    if (!(query.threshold >= 0 && query.threshold <= 1)) throw ConfigError("threshold must lie in [0, 1]");
  }
};

// ---------------------------------------------------------------------------
// Config JSON

namespace detail {

/// Copies doc[key] into `value` when present; unknown keys are rejected by
/// the caller through `allowed`.
template <typename T>
void read_key(const nlohmann::json& doc, const char* key, T& value) {
  if (!doc.contains(key)) return;
  try {
    value = doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

inline void reject_unknown(const nlohmann::json& doc, const std::set<std::string>& allowed, const std::string& where) {
  if (!doc.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : doc.items())
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + key + "' in " + where);
}

}  // namespace detail

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  return {
      {"workspace", c.workspace},
      {"paths",
       {{"scene", c.scene}, {"cameras", c.cameras}, {"regions", c.regions}, {"queries", c.queries}, {"gt", c.gt},
        {"tracks", c.tracks}, {"codes", c.codes}, {"field", c.field}, {"results", c.results}}},
      {"levels", c.levels},
      {"threads", c.threads},
      {"seed", c.seed},
      {"synth",
       {{"gaussians", c.synth.gaussians}, {"objects", c.synth.objects}, {"views", c.synth.views},
        {"width", c.synth.width}, {"height", c.synth.height}, {"dim", c.synth.dim},
        {"noise_rate", c.synth.noise_rate}, {"gaussian_scale", c.synth.gaussian_scale},
        {"coverage", c.synth.coverage}, {"tracks", c.synth.tracks}}},
      {"sparse_coding",
       {{"L", c.coding.atoms}, {"K", c.coding.sparsity}, {"lr", c.coding.learning_rate}, {"epochs", c.coding.epochs},
        {"init_scale", c.coding.logit_init_scale}, {"kmeans_iterations", c.coding.kmeans_max_iterations}}},
      {"uplift", {{"K", c.uplift_k}}},
      {"query", {{"alpha", c.query.alpha}, {"pool", c.query.pool}, {"threshold", c.query.threshold}}},
      {"bench",
       {{"gaussians", c.bench.gaussians}, {"views", c.bench.views}, {"width", c.bench.width},
        {"height", c.bench.height}, {"D", c.bench.dim}, {"K", c.bench.sparsity}, {"L", c.bench.atoms},
        {"repetitions", c.bench.repetitions}, {"identity_codebook", c.bench.identity_codebook}}},
  };
}

/// Overlays `doc` onto `c`. Missing keys keep their current values.
inline void apply_config_json(PipelineConfig& c, const nlohmann::json& doc) {
  using detail::read_key;
  detail::reject_unknown(doc, {"workspace", "paths", "levels", "threads", "seed", "synth", "sparse_coding", "uplift",
                               "query", "bench"},
                         "config");
  read_key(doc, "workspace", c.workspace);
  read_key(doc, "levels", c.levels);
  read_key(doc, "threads", c.threads);
  read_key(doc, "seed", c.seed);
  if (doc.contains("paths")) {
    const auto& p = doc["paths"];
    detail::reject_unknown(p, {"scene", "cameras", "regions", "queries", "gt", "tracks", "codes", "field", "results"},
                           "paths");
    read_key(p, "scene", c.scene);
    read_key(p, "cameras", c.cameras);
    read_key(p, "regions", c.regions);
    read_key(p, "queries", c.queries);
    read_key(p, "gt", c.gt);
    read_key(p, "tracks", c.tracks);
    read_key(p, "codes", c.codes);
    read_key(p, "field", c.field);
    read_key(p, "results", c.results);
  }
  if (doc.contains("synth")) {
    const auto& s = doc["synth"];
    detail::reject_unknown(s, {"gaussians", "objects", "views", "width", "height", "dim", "noise_rate",
                               "gaussian_scale", "coverage", "tracks"},
                           "synth");
    read_key(s, "gaussians", c.synth.gaussians);
    read_key(s, "objects", c.synth.objects);
    read_key(s, "views", c.synth.views);
    read_key(s, "width", c.synth.width);
    read_key(s, "height", c.synth.height);
    read_key(s, "dim", c.synth.dim);
    read_key(s, "noise_rate", c.synth.noise_rate);
    read_key(s, "gaussian_scale", c.synth.gaussian_scale);
    read_key(s, "coverage", c.synth.coverage);
    read_key(s, "tracks", c.synth.tracks);
  }
  if (doc.contains("sparse_coding")) {
    const auto& s = doc["sparse_coding"];
    detail::reject_unknown(s, {"L", "K", "lr", "epochs", "init_scale", "kmeans_iterations"}, "sparse_coding");
    read_key(s, "L", c.coding.atoms);
    read_key(s, "K", c.coding.sparsity);
    read_key(s, "lr", c.coding.learning_rate);
    read_key(s, "epochs", c.coding.epochs);
    read_key(s, "init_scale", c.coding.logit_init_scale);
    read_key(s, "kmeans_iterations", c.coding.kmeans_max_iterations);
  }
  if (doc.contains("uplift")) {
    detail::reject_unknown(doc["uplift"], {"K"}, "uplift");
    read_key(doc["uplift"], "K", c.uplift_k);
  }
  if (doc.contains("query")) {
    const auto& q = doc["query"];
    detail::reject_unknown(q, {"alpha", "pool", "threshold"}, "query");
    read_key(q, "alpha", c.query.alpha);
    read_key(q, "pool", c.query.pool);
    read_key(q, "threshold", c.query.threshold);
  }
  if (doc.contains("bench")) {
    const auto& b = doc["bench"];
    detail::reject_unknown(b, {"gaussians", "views", "width", "height", "D", "K", "L", "repetitions",
                               "identity_codebook"},
                           "bench");
    read_key(b, "gaussians", c.bench.gaussians);
    read_key(b, "views", c.bench.views);
    read_key(b, "width", c.bench.width);
    read_key(b, "height", c.bench.height);
    read_key(b, "D", c.bench.dim);
    read_key(b, "K", c.bench.sparsity);
    read_key(b, "L", c.bench.atoms);
    read_key(b, "repetitions", c.bench.repetitions);
    read_key(b, "identity_codebook", c.bench.identity_codebook);
  }
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(path + ": " + ex.what());
  }
  PipelineConfig c;
  apply_config_json(c, doc);
  return c;
}

// ---------------------------------------------------------------------------
// Helpers

namespace detail {

/// Re-throws `f`'s scoup errors with a context prefix, keeping the family.
template <typename F>
auto with_context(const std::string& ctx, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(ctx + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(ctx + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(ctx + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(ctx + ": " + e.what());
  }
}

inline void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

inline void write_json(const fs::path& path, const nlohmann::json& doc) { write_text(path, doc.dump(1) + "\n"); }

/// Letters, digits, '-', '_' and '.' survive; everything else becomes '_'.
inline std::string file_stem(const std::string& label) {
  std::string s = label;
  for (auto& ch : s)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  return s;
}

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace detail

inline fs::path region_map_path(const PipelineConfig& c, std::size_t level, std::size_t view) {
  return c.path(c.regions) / ("level" + std::to_string(level)) / ("view" + std::to_string(view) + ".rmap");
}
inline fs::path feature_path(const PipelineConfig& c, std::size_t level, std::size_t view) {
  return c.path(c.regions) / ("level" + std::to_string(level)) / ("view" + std::to_string(view) + ".feat");
}
inline fs::path codes_path(const PipelineConfig& c, std::size_t level) {
  return c.path(c.codes) / ("level" + std::to_string(level) + ".cbk");
}
inline fs::path gt_path(const PipelineConfig& c, std::size_t view, const std::string& label) {
  return c.path(c.gt) / ("view" + std::to_string(view)) / (detail::file_stem(label) + ".pgm");
}

/// Per-view ground-truth masks keyed by query label.
using GroundTruth = std::vector<std::map<std::string, std::vector<std::uint8_t>>>;

inline GroundTruth bundle_ground_truth(const SyntheticBundle& b) {
  GroundTruth gt(b.gt_masks.size());
  for (std::size_t v = 0; v < b.gt_masks.size(); ++v)
    for (std::size_t k = 0; k < b.gt_masks[v].size(); ++k) gt[v][object_label(k)] = b.gt_masks[v][k];
  return gt;
}

inline RegionFeatureSet load_level_regions(const PipelineConfig& c, std::size_t level, std::size_t views) {
  return detail::with_context("level " + std::to_string(level), [&] {
    std::vector<RegionMap> maps;
    std::vector<RowMatrix> feats;
    for (std::size_t v = 0; v < views; ++v) {
      maps.push_back(load_region_map(region_map_path(c, level, v).string()));
      feats.push_back(load_features(feature_path(c, level, v).string()));
    }
    return assemble_regions(static_cast<int>(level), maps, feats);
  });
}

/// Masks for every (view, label) that has a file under the gt directory.
inline GroundTruth load_ground_truth(const PipelineConfig& c, std::size_t views, const QueryFile& queries) {
  GroundTruth gt(views);
  for (std::size_t v = 0; v < views; ++v)
    for (const auto& q : queries.queries) {
      const auto p = gt_path(c, v, q.label);
      if (fs::exists(p)) gt[v][q.label] = load_mask_pgm(p.string()).mask;
    }
  return gt;
}

// ---------------------------------------------------------------------------
// In-memory stages shared by the commands, the sweep and the acceptance suite

inline SparseCodingConfig level_coding(const SparseCodingConfig& base, std::uint64_t seed, std::size_t level) {
  SparseCodingConfig cfg = base;
  cfg.seed = seed * 1000003ull + level;
  return cfg;
}

/// Trains one level. A level without regions gets a seeded random codebook
/// and no codes; `warned` is set in that case.
inline TrainResult encode_level(const RegionFeatureSet& set, const SparseCodingConfig& cfg, bool* warned = nullptr) {
  if (set.region_count() > 0) return train(set, cfg);
  cfg.validate();
  if (warned) *warned = true;
  TrainResult out;
  std::mt19937_64 rng(cfg.seed);
  const std::size_t dim = std::max<std::size_t>(set.dim(), 1);
  out.codebook.basis.resize(static_cast<Eigen::Index>(cfg.atoms), static_cast<Eigen::Index>(dim));
  for (std::size_t l = 0; l < cfg.atoms; ++l) out.codebook.basis.row(Eigen::Index(l)) = random_unit_vector(dim, rng).transpose();
  out.mean_cosine = 1.0;
  return out;
}

inline SparseFieldLevel uplift_level(std::span<const PixelFragments> views, const RegionFeatureSet& set,
                                     const TrainResult& trained, std::size_t gaussians, std::size_t k, int threads) {
  if (trained.codes.size() != set.region_count())
    throw DataError("code file holds " + std::to_string(trained.codes.size()) + " regions, region maps have " +
                    std::to_string(set.region_count()));
  if (set.maps.size() != views.size()) throw DataError("region maps and cameras disagree on the view count");
  const auto images = encode_region_codes(set, trained.codes);
  return uplift_sparse(views, images, trained.codebook, gaussians, k, threads);
}

/// Decoded, unit-normalized features of every level for one view.
struct DecodedView {
  int width = 0;
  int height = 0;
  std::vector<RowMatrix> levels;
};

inline DecodedView decode_view(const PixelFragments& frags, const GaussianSparseField& field, int threads = 1) {
  DecodedView out{frags.width(), frags.height(), {}};
  const auto maps = render_coefficients(frags, field, threads);
  for (std::size_t l = 0; l < maps.size(); ++l) out.levels.push_back(decode(maps[l], field.levels[l].codebook));
  return out;
}

inline QueryPrediction predict(const DecodedView& view, const QueryFile& queries, const QueryEmbedding& q,
                               const QueryParams& params) {
  std::vector<RelevancyMap> maps;
  for (const auto& f : view.levels)
    maps.push_back(relevancy(f, view.width, view.height, q, queries.canon, params.alpha));
  return postprocess(maps, params.pool, params.threshold);
}

/// One metrics row per (view, query) pair with a ground-truth mask.
inline MetricsReport evaluate_field(std::span<const PixelFragments> views, const GaussianSparseField& field,
                                    const QueryFile& queries, const GroundTruth& gt, const QueryParams& params,
                                    int threads = 1) {
  MetricsReport report;
  for (std::size_t v = 0; v < views.size() && v < gt.size(); ++v) {
    if (gt[v].empty()) continue;
    const auto decoded = decode_view(views[v], field, threads);
    for (const auto& q : queries.queries) {
      auto it = gt[v].find(q.label);
      if (it == gt[v].end()) continue;
      auto row = evaluate(q.label, predict(decoded, queries, q, params), it->second);
      row.label = "view" + std::to_string(v) + "/" + q.label;
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

/// encode -> uplift over every level, in memory.
inline GaussianSparseField encode_and_uplift(const std::vector<RegionFeatureSet>& sets,
                                             std::span<const PixelFragments> views, std::size_t gaussians,
                                             const SparseCodingConfig& coding, std::size_t uplift_k,
                                             std::uint64_t seed, int threads = 1) {
  GaussianSparseField field;
  for (std::size_t l = 0; l < sets.size(); ++l) {
    const auto trained = encode_level(sets[l], level_coding(coding, seed, l));
    field.levels.push_back(uplift_level(views, sets[l], trained, gaussians, uplift_k, threads));
  }
  return field;
}

// ---------------------------------------------------------------------------
// Commands

struct Console {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
};

/// Relative path and size of every regular file under `root`, sorted.
inline std::vector<std::pair<std::string, std::uintmax_t>> list_files(const fs::path& root) {
  std::vector<std::pair<std::string, std::uintmax_t>> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.emplace_back(fs::relative(e.path(), root).generic_string(), e.file_size());
  std::sort(files.begin(), files.end());
  return files;
}

inline std::vector<std::string> run_synth(const PipelineConfig& c, Console con = {}) {
  c.validate();
  SynthesisSpec spec = c.synth;
  spec.levels = c.levels;
  const auto b = synthesize_scene(spec, c.seed);
  const fs::path root(c.workspace);
  detail::make_dirs(root);
  std::vector<fs::path> written;
  auto note = [&](const fs::path& p) { written.push_back(p); };

  for (const auto* p : {&c.scene, &c.cameras, &c.queries, &c.tracks}) detail::make_dirs(c.path(*p).parent_path());
  save_scene_ply(b.scene, c.path(c.scene).string());
  note(c.path(c.scene));
  save_cameras(b.cameras, c.path(c.cameras).string());
  note(c.path(c.cameras));
  for (std::size_t l = 0; l < b.levels.size(); ++l) {
    detail::make_dirs(region_map_path(c, l, 0).parent_path());
    for (std::size_t v = 0; v < b.levels[l].size(); ++v) {
      save_region_map(b.levels[l][v].map, region_map_path(c, l, v).string());
      save_features(b.levels[l][v].features, feature_path(c, l, v).string());
      note(region_map_path(c, l, v));
      note(feature_path(c, l, v));
    }
  }
  save_queries(b.queries, c.path(c.queries).string());
  note(c.path(c.queries));
  for (std::size_t v = 0; v < b.gt_masks.size(); ++v) {
    detail::make_dirs(gt_path(c, v, "x").parent_path());
    for (std::size_t k = 0; k < b.gt_masks[v].size(); ++k) {
      const auto p = gt_path(c, v, object_label(k));
      save_mask_pgm(b.gt_masks[v][k], b.cameras[v].width, b.cameras[v].height, p.string());
      note(p);
    }
  }
  save_tracks(b.tracks, c.path(c.tracks).string());
  note(c.path(c.tracks));
  const fs::path images = root / "images";
  detail::make_dirs(images);
  for (std::size_t v = 0; v < b.cameras.size(); ++v) {
    const auto p = images / ("view" + std::to_string(v) + ".png");
    save_png(rgb_image(render_rgb(b.scene, b.cameras[v], c.threads), b.cameras[v].width, b.cameras[v].height),
             p.string());
    note(p);
  }
  detail::write_json(root / "pipeline.json", config_to_json(c));
  note(root / "pipeline.json");

  nlohmann::json manifest = nlohmann::json::array();
  std::vector<std::string> names;
  for (const auto& p : written) {
    const auto rel = fs::relative(p, root).generic_string();
    names.push_back(rel);
    manifest.push_back({{"path", rel}, {"bytes", fs::file_size(p)}});
  }
  detail::write_json(root / "manifest.json", manifest);
  con.out << "synth: " << b.scene.size() << " Gaussians, " << b.cameras.size() << " views, " << b.levels.size()
          << " levels, " << b.total_regions() << " regions (" << b.corrupted_regions() << " corrupted)\n";
  con.out << "manifest (" << names.size() << " files):\n";
  for (const auto& m : manifest) con.out << "  " << m["path"].get<std::string>() << "  " << m["bytes"] << "\n";
  return names;
}

inline std::vector<TrainResult> run_encode(const PipelineConfig& c, Console con = {}) {
  c.validate();
  const auto cameras = load_cameras(c.path(c.cameras).string());
  detail::make_dirs(c.path(c.codes));
  std::vector<TrainResult> results;
  for (std::size_t l = 0; l < c.levels; ++l) {
    const auto set = load_level_regions(c, l, cameras.size());
    bool empty = false;
    auto trained = detail::with_context("level " + std::to_string(l),
                                        [&] { return encode_level(set, level_coding(c.coding, c.seed, l), &empty); });
    if (empty) con.err << "warning: level " << l << " has no regions; writing an empty code file\n";
    save_trained_codes(trained.codebook, c.coding.sparsity, trained.codes, codes_path(c, l).string());
    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < trained.loss_history.size(); ++e)
      csv += std::to_string(e) + "," + detail::fmt_double(trained.loss_history[e]) + "\n";
    detail::write_text(c.path(c.codes) / ("level" + std::to_string(l) + "_loss.csv"), csv);
    con.out << "encode level " << l << ": " << set.region_count() << " regions, L=" << c.coding.atoms
            << " K=" << c.coding.sparsity << ", mean cosine " << detail::fmt_double(trained.mean_cosine) << "\n";
    results.push_back(std::move(trained));
  }
  return results;
}

struct UpliftSummary {
  std::vector<EntropySummary> levels;
  bool all_empty = true;
};

inline UpliftSummary run_uplift(const PipelineConfig& c, Console con = {}) {
  c.validate();
  const auto scene = load_scene_ply(c.path(c.scene).string());
  const auto cameras = load_cameras(c.path(c.cameras).string());
  const auto views = rasterize_views(scene, cameras, c.threads);
  GaussianSparseField field;
  UpliftSummary summary;
  nlohmann::json stats = nlohmann::json::array();
  for (std::size_t l = 0; l < c.levels; ++l) {
    const auto set = load_level_regions(c, l, cameras.size());
    const auto codes = detail::with_context("level " + std::to_string(l), [&] {
      const auto file = load_trained_codes(codes_path(c, l).string());
      TrainResult t;
      t.codebook = file.codebook;
      t.codes = file.codes;
      return t;
    });
    field.levels.push_back(detail::with_context(
        "level " + std::to_string(l), [&] { return uplift_level(views, set, codes, scene.size(), c.uplift_k, c.threads); }));
    const auto s = summarize_entropy(field.levels.back());
    summary.all_empty = summary.all_empty && s.non_empty == 0;
    const double frac = s.gaussians ? double(s.non_empty) / double(s.gaussians) : 0.0;
    con.out << "uplift level " << l << ": non-empty codes " << s.non_empty << "/" << s.gaussians << " ("
            << detail::fmt_double(frac) << "), mean entropy " << detail::fmt_double(s.mean_entropy) << "\n";
    stats.push_back({{"level", l}, {"gaussians", s.gaussians}, {"non_empty", s.non_empty},
                     {"non_empty_fraction", frac}, {"mean_entropy", s.mean_entropy}});
    summary.levels.push_back(s);
  }
  if (summary.all_empty) con.err << "warning: every Gaussian code is empty; queries will return empty masks\n";
  detail::make_dirs(c.path(c.field).parent_path());
  save_sparse_field(field, c.path(c.field).string());
  detail::write_json(c.path(c.field).string() + ".stats.json", stats);
  return summary;
}

struct QueryOutcome {
  QueryPrediction prediction;
  std::optional<QueryMetrics> metrics;
  fs::path heatmap, mask, report;
};

inline QueryOutcome run_query(const PipelineConfig& c, std::size_t view, const std::string& label, Console con = {}) {
  c.validate();
  const auto queries = load_queries(c.path(c.queries).string());
  const auto& q = queries.find(label);
  const auto scene = load_scene_ply(c.path(c.scene).string());
  const auto cameras = load_cameras(c.path(c.cameras).string());
  if (view >= cameras.size())
    throw ConfigError("unknown view " + std::to_string(view) + " (" + std::to_string(cameras.size()) + " cameras)");
  const auto field = load_sparse_field(c.path(c.field).string());
  if (field.gaussian_count() != scene.size()) throw DataError("sparse field and scene disagree on the Gaussian count");
  for (const auto& level : field.levels)
    if (level.codebook.dim() != std::size_t(q.vector.size())) throw DataError("query dimension does not match codebook");

  const auto frags = rasterize_fragments(scene, cameras[view], c.threads);
  QueryOutcome out;
  out.prediction = predict(decode_view(frags, field, c.threads), queries, q, c.query);
  const auto& pred = out.prediction;

  const fs::path dir = c.path(c.results);
  detail::make_dirs(dir);
  const std::string stem = "view" + std::to_string(view) + "_" + detail::file_stem(label);
  out.heatmap = dir / (stem + "_heatmap.png");
  out.mask = dir / (stem + "_mask.png");
  out.report = dir / (stem + ".json");
  save_png(heatmap_image(pred.pooled, pred.width, pred.height), out.heatmap.string());
  save_png(mask_image(pred.mask, pred.width, pred.height), out.mask.string());

  nlohmann::json report = {{"label", label},
                           {"view", view},
                           {"level", pred.level},
                           {"point", {pred.point_x, pred.point_y}},
                           {"max_relevancy", pred.max_relevancy},
                           {"mask_pixels", std::count(pred.mask.begin(), pred.mask.end(), std::uint8_t(1))}};
  con.out << "query '" << label << "' view " << view << ": level " << pred.level << ", point (" << pred.point_x << ", "
          << pred.point_y << "), max relevancy " << detail::fmt_double(pred.max_relevancy) << "\n";
  const auto gt_file = gt_path(c, view, label);
  if (fs::exists(gt_file)) {
    const auto gt = load_mask_pgm(gt_file.string());
    if (gt.width != pred.width || gt.height != pred.height) throw DataError(gt_file.string() + ": size does not match view");
    out.metrics = evaluate(label, pred, gt.mask);
    report["metrics"] = {{"iou", out.metrics->iou}, {"hit", out.metrics->hit}};
    con.out << "metrics: iou " << detail::fmt_double(out.metrics->iou) << ", hit " << (out.metrics->hit ? 1 : 0) << "\n";
  }
  detail::write_json(out.report, report);
  return out;
}

/// Every query on every view with ground truth; writes metrics.json.
inline MetricsReport run_query_all(const PipelineConfig& c, Console con = {}) {
  c.validate();
  const auto queries = load_queries(c.path(c.queries).string());
  const auto scene = load_scene_ply(c.path(c.scene).string());
  const auto cameras = load_cameras(c.path(c.cameras).string());
  const auto field = load_sparse_field(c.path(c.field).string());
  if (field.gaussian_count() != scene.size()) throw DataError("sparse field and scene disagree on the Gaussian count");
  const auto gt = load_ground_truth(c, cameras.size(), queries);
  const auto views = rasterize_views(scene, cameras, c.threads);
  const auto report = evaluate_field(views, field, queries, gt, c.query, c.threads);
  detail::make_dirs(c.path(c.results));
  detail::write_json(c.path(c.results) / "metrics.json", metrics_to_json(report));
  con.out << "queries evaluated: " << report.rows.size() << ", mIoU " << detail::fmt_double(report.mean_iou())
          << ", mAcc " << detail::fmt_double(report.localization_accuracy()) << "\n";
  return report;
}

inline BenchReport run_bench(const PipelineConfig& c, Console con = {}) {
  c.validate();
  const auto& b = c.bench;
  SynthesisSpec spec = c.synth;
  spec.gaussians = b.gaussians;
  spec.views = b.views;
  spec.width = b.width;
  spec.height = b.height;
  const auto geo = synthesize_geometry(spec, c.seed);
  const auto report = bench_uplift(geo.scene, geo.cameras, b.dim, b.sparsity, b.atoms, b.repetitions, c.threads,
                                   c.seed, b.identity_codebook);
  detail::make_dirs(c.path(c.results));
  detail::write_json(c.path(c.results) / "bench.json", bench_to_json(report));
  con.out << "bench: N=" << report.gaussians << " views=" << report.views << " fragments=" << report.fragments
          << " D=" << report.dim << " K=" << report.sparsity << " L=" << report.atoms << "\n"
          << "  dense " << detail::fmt_double(report.dense_seconds) << " s, sparse "
          << detail::fmt_double(report.sparse_seconds) << " s, speedup " << detail::fmt_double(report.speedup) << "x\n"
          << "  storage: sparse level " << report.sparse_level_bytes << " B, dense " << report.dense_bytes << " B\n";
  return report;
}

struct SweepRow {
  std::string axis;
  std::size_t value = 0;
  double miou = 0;
  double macc = 0;
};

/// encode -> uplift -> query for each value of L or K on the workspace data.
inline std::vector<SweepRow> run_sweep(const PipelineConfig& c, const std::string& axis,
                                       const std::vector<std::size_t>& values, Console con = {}) {
  c.validate();
  if (axis != "L" && axis != "K") throw ConfigError("sweep axis must be L or K");
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  const auto scene = load_scene_ply(c.path(c.scene).string());
  const auto cameras = load_cameras(c.path(c.cameras).string());
  const auto queries = load_queries(c.path(c.queries).string());
  const auto gt = load_ground_truth(c, cameras.size(), queries);
  const auto views = rasterize_views(scene, cameras, c.threads);
  std::vector<RegionFeatureSet> sets;
  for (std::size_t l = 0; l < c.levels; ++l) sets.push_back(load_level_regions(c, l, cameras.size()));

  std::vector<SweepRow> rows;
  std::string csv = "axis,value,mIoU,mAcc\n";
  for (auto value : values) {
    const std::string ctx = "sweep " + axis + "=" + std::to_string(value);
    SparseCodingConfig coding = c.coding;
    std::size_t k = c.uplift_k;
    if (axis == "L") {
      coding.atoms = value;
    } else {
      coding.sparsity = value;
      k = value;
    }
    const auto report = detail::with_context(ctx, [&] {
      coding.validate();
      const auto field = encode_and_uplift(sets, views, scene.size(), coding, k, c.seed, c.threads);
      return evaluate_field(views, field, queries, gt, c.query, c.threads);
    });
    rows.push_back({axis, value, report.mean_iou(), report.localization_accuracy()});
    csv += axis + "," + std::to_string(value) + "," + detail::fmt_double(rows.back().miou) + "," +
           detail::fmt_double(rows.back().macc) + "\n";
    con.out << axis << "=" << value << "  mIoU " << detail::fmt_double(rows.back().miou) << "  mAcc "
            << detail::fmt_double(rows.back().macc) << "\n";
  }
  detail::make_dirs(c.path(c.results));
  detail::write_text(c.path(c.results) / ("sweep_" + axis + ".csv"), csv);
  return rows;
}

struct AnalyzeOptions {
  double filter_fraction = 0.0;  // 0 = no filtering
  EntropyMode mode = EntropyMode::Lowest;
};

/// Entropy summary per level, multi-view consistency when tracks exist, and
/// optionally an entropy-filtered copy of the field.
inline nlohmann::json run_analyze(const PipelineConfig& c, const AnalyzeOptions& opt = {}, Console con = {}) {
  c.validate();
  const auto field = load_sparse_field(c.path(c.field).string());
  nlohmann::json doc = {{"levels", nlohmann::json::array()}};
  for (std::size_t l = 0; l < field.levels.size(); ++l) {
    const auto s = summarize_entropy(field.levels[l]);
    doc["levels"].push_back({{"level", l},
                             {"gaussians", s.gaussians},
                             {"non_empty", s.non_empty},
                             {"empty", s.gaussians - s.non_empty},
                             {"mean_entropy", s.mean_entropy},
                             {"histogram", s.histogram}});
    con.out << "level " << l << ": " << s.non_empty << "/" << s.gaussians << " non-empty, mean entropy "
            << detail::fmt_double(s.mean_entropy) << " (" << s.gaussians - s.non_empty << " empty, entropy +inf)\n";
  }

  const auto tracks_file = c.path(c.tracks);
  if (fs::exists(tracks_file)) {
    const auto scene = load_scene_ply(c.path(c.scene).string());
    const auto cameras = load_cameras(c.path(c.cameras).string());
    const auto tracks = load_tracks(tracks_file.string());
    validate_tracks(tracks, cameras);
    if (field.gaussian_count() != scene.size()) throw DataError("sparse field and scene disagree on the Gaussian count");
    std::set<std::size_t> used;
    for (const auto& t : tracks)
      for (const auto& o : t.observations) used.insert(o.view);
    std::vector<std::map<std::size_t, ViewFeatures>> per_level(field.levels.size());
    for (auto v : used) {
      const auto decoded = decode_view(rasterize_fragments(scene, cameras[v], c.threads), field, c.threads);
      for (std::size_t l = 0; l < field.levels.size(); ++l)
        per_level[l][v] = ViewFeatures{decoded.width, decoded.height, decoded.levels[l]};
    }
    doc["consistency"] = nlohmann::json::array();
    for (std::size_t l = 0; l < field.levels.size(); ++l) {
      const auto s = multiview_consistency(tracks, per_level[l]);
      doc["consistency"].push_back({{"level", l},
                                    {"tracks_used", s.tracks_used},
                                    {"tracks_skipped", s.tracks_skipped},
                                    {"excluded_observations", s.excluded_observations},
                                    {"mean", s.mean},
                                    {"q1", s.q1},
                                    {"median", s.median},
                                    {"q3", s.q3},
                                    {"histogram", s.histogram}});
      con.out << "level " << l << ": consistency over " << s.tracks_used << " tracks, mean "
              << detail::fmt_double(s.mean) << ", median " << detail::fmt_double(s.median) << "\n";
    }
  }

  detail::make_dirs(c.path(c.results));
  if (opt.filter_fraction > 0.0) {
    const auto filtered = entropy_filter(field, opt.filter_fraction, opt.mode);
    const auto p = c.path(c.results) / (opt.mode == EntropyMode::Lowest ? "field_minus_lowest.scup" : "field_minus_highest.scup");
    save_sparse_field(filtered, p.string());
    doc["filtered_field"] = p.filename().string();
    con.out << "wrote " << p.string() << "\n";
  }
  detail::write_json(c.path(c.results) / "analysis.json", doc);
  return doc;
}

}  // namespace scoup
