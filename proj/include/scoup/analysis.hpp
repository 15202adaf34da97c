#pragma once

#include "scoup/common.hpp"
#include "scoup/rasterizer.hpp"
#include "scoup/semantic_query.hpp"
#include "scoup/sparse_coding.hpp"
#include "scoup/uplift.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>

namespace scoup {

// ---------------------------------------------------------------------------
// Entropy

/// H = -sum c ln c over the code entries. Empty codes return +infinity
/// (least confident).
inline double entropy(const SparseCode& code) {
  if (code.empty()) return std::numeric_limits<double>::infinity();
  double h = 0.0;
  for (const auto& e : code.entries)
    if (e.coefficient > 0.0) h -= e.coefficient * std::log(e.coefficient);
  return std::max(0.0, h);
}

enum class EntropyMode { Lowest, Highest };

/// Empties the codes of ceil(fraction * M) Gaussians per level, where M is
/// the number of non-empty codes, ranked by entropy in the chosen direction
/// (ties toward the lower index). Already-empty codes rank as the highest
/// entropy and are never counted toward the removal budget.
inline SparseFieldLevel entropy_filter(const SparseFieldLevel& level, double fraction, EntropyMode mode) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("entropy filter fraction must lie in (0, 1)");
  std::vector<std::pair<double, std::uint32_t>> ranked;
  for (std::size_t i = 0; i < level.gaussian_count(); ++i)
    if (!level.empty_code(i)) ranked.emplace_back(entropy(level.code(i)), static_cast<std::uint32_t>(i));
  if (mode == EntropyMode::Lowest)
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  else
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  const auto remove = static_cast<std::size_t>(std::ceil(fraction * double(ranked.size()) - 1e-12));
  SparseFieldLevel out = level;
  for (std::size_t r = 0; r < std::min(remove, ranked.size()); ++r) out.clear_code(ranked[r].second);
  return out;
}

inline GaussianSparseField entropy_filter(const GaussianSparseField& field, double fraction, EntropyMode mode) {
  GaussianSparseField out;
  for (const auto& level : field.levels) out.levels.push_back(entropy_filter(level, fraction, mode));
  return out;
}

struct EntropySummary {
  std::size_t gaussians = 0;
  std::size_t non_empty = 0;
  double mean_entropy = 0.0;  // over non-empty codes
  std::vector<std::size_t> histogram;  // bins over [0, ln K]
};

inline EntropySummary summarize_entropy(const SparseFieldLevel& level, std::size_t bins = 10) {
  EntropySummary s;
  s.gaussians = level.gaussian_count();
  s.histogram.assign(bins, 0);
  const double hmax = std::log(double(std::max<std::size_t>(level.k, 2)));
  for (std::size_t i = 0; i < level.gaussian_count(); ++i) {
    if (level.empty_code(i)) continue;
    const double h = entropy(level.code(i));
    ++s.non_empty;
    s.mean_entropy += h;
    const auto b = std::min(bins - 1, static_cast<std::size_t>(h / hmax * double(bins)));
    ++s.histogram[b];
  }
  if (s.non_empty) s.mean_entropy /= double(s.non_empty);
  return s;
}

// ---------------------------------------------------------------------------
// Multi-view consistency

struct Observation {
  std::size_t view = 0;
  int x = 0;
  int y = 0;
};

struct Track {
  Vec3 point = Vec3::Zero();
  std::vector<Observation> observations;
};

using TrackSet = std::vector<Track>;

/// Throws when an observation falls outside its camera or a track has fewer
/// than two observations.
inline void validate_tracks(const TrackSet& tracks, const std::vector<Camera>& cameras) {
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    if (tracks[t].observations.size() < 2) throw DataError("track " + std::to_string(t) + " has < 2 observations");
    for (const auto& o : tracks[t].observations) {
      if (o.view >= cameras.size()) throw DataError("track " + std::to_string(t) + ": unknown view");
      if (o.x < 0 || o.y < 0 || o.x >= cameras[o.view].width || o.y >= cameras[o.view].height)
        throw DataError("track " + std::to_string(t) + ": pixel outside view bounds");
    }
  }
}

inline nlohmann::json tracks_to_json(const TrackSet& tracks) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& t : tracks) {
    nlohmann::json obs = nlohmann::json::array();
    for (const auto& o : t.observations) obs.push_back({{"view", o.view}, {"pixel", {o.x, o.y}}});
    doc.push_back({{"point", {t.point.x(), t.point.y(), t.point.z()}}, {"observations", obs}});
  }
  return doc;
}

inline TrackSet tracks_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw FormatError("track file must hold a JSON list");
  TrackSet tracks;
  try {
    for (const auto& e : doc) {
      Track t;
      const auto p = e.at("point").get<std::vector<double>>();
      if (p.size() != 3) throw FormatError("track point needs 3 numbers");
      t.point = Vec3(p[0], p[1], p[2]);
      for (const auto& o : e.at("observations")) {
        const auto px = o.at("pixel").get<std::vector<int>>();
        if (px.size() != 2) throw FormatError("track pixel needs 2 numbers");
        t.observations.push_back({o.at("view").get<std::size_t>(), px[0], px[1]});
      }
      tracks.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("track file: ") + ex.what());
  }
  return tracks;
}

inline TrackSet load_tracks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open tracks: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(path + ": " + ex.what());
  }
  return tracks_from_json(doc);
}

inline void save_tracks(const TrackSet& tracks, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << tracks_to_json(tracks).dump(1) << "\n";
}

/// Decoded per-view feature image (pixels x D).
struct ViewFeatures {
  int width = 0;
  int height = 0;
  RowMatrix features;
};

struct ConsistencyStats {
  std::size_t tracks_used = 0;
  std::size_t tracks_skipped = 0;        // fewer than two usable observations
  std::size_t excluded_observations = 0; // zero feature
  std::vector<double> per_track;         // mean pairwise cosine per used track
  double mean = 0, q1 = 0, median = 0, q3 = 0;
  std::vector<std::size_t> histogram;    // 20 bins over [-1, 1]
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * double(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(sorted.size() - 1, lo + 1);
  return sorted[lo] + (pos - double(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

inline ConsistencyStats multiview_consistency(const TrackSet& tracks, const std::map<std::size_t, ViewFeatures>& views) {
  ConsistencyStats s;
  s.histogram.assign(20, 0);
  for (const auto& t : tracks) {
    std::vector<Eigen::RowVectorXd> feats;
    for (const auto& o : t.observations) {
      auto it = views.find(o.view);
      if (it == views.end()) throw DataError("no feature image for view " + std::to_string(o.view));
      const auto& vf = it->second;
      if (o.x < 0 || o.y < 0 || o.x >= vf.width || o.y >= vf.height) throw DataError("observation outside view");
      Eigen::RowVectorXd f = vf.features.row(Eigen::Index(o.y) * vf.width + o.x);
      const double n = f.norm();
      if (n == 0.0) {
        ++s.excluded_observations;
        continue;
      }
      feats.push_back(f / n);
    }
    if (feats.size() < 2) {
      ++s.tracks_skipped;
      continue;
    }
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < feats.size(); ++a)
      for (std::size_t b = a + 1; b < feats.size(); ++b, ++pairs) sum += feats[a].dot(feats[b]);
    const double mean = sum / double(pairs);
    s.per_track.push_back(mean);
    const auto bin = std::min<std::size_t>(19, static_cast<std::size_t>(std::max(0.0, (mean + 1.0) * 10.0)));
    ++s.histogram[bin];
  }
  s.tracks_used = s.per_track.size();
  if (!s.per_track.empty()) {
    auto sorted = s.per_track;
    std::sort(sorted.begin(), sorted.end());
    s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / double(sorted.size());
    s.q1 = detail::quantile_sorted(sorted, 0.25);
    s.median = detail::quantile_sorted(sorted, 0.5);
    s.q3 = detail::quantile_sorted(sorted, 0.75);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Dense vs sparse uplift benchmark

struct BenchReport {
  std::size_t gaussians = 0, views = 0, fragments = 0;
  std::size_t dim = 0, sparsity = 0, atoms = 0, repetitions = 0;
  int threads = 1;
  double dense_seconds = 0;   // median
  double sparse_seconds = 0;  // median
  double speedup = 0;
  double max_relative_error = 0;  // dense vs decoded sparse, before timing
  std::size_t sparse_level_bytes = 0;  // header + codebook + N*K*8
  std::size_t sparse_payload_bytes = 0;  // N*K*8
  std::size_t dense_bytes = 0;  // N*D*4
};

inline nlohmann::json bench_to_json(const BenchReport& r) {
  return {{"gaussians", r.gaussians},       {"views", r.views},
          {"fragments", r.fragments},       {"D", r.dim},
          {"K", r.sparsity},                {"L", r.atoms},
          {"repetitions", r.repetitions},   {"threads", r.threads},
          {"dense_seconds", r.dense_seconds}, {"sparse_seconds", r.sparse_seconds},
          {"speedup", r.speedup},           {"max_relative_error", r.max_relative_error},
          {"sparse_level_bytes", r.sparse_level_bytes}, {"sparse_payload_bytes", r.sparse_payload_bytes},
          {"dense_bytes", r.dense_bytes}};
}

/// Synthetic codes for benchmarking: the image is tiled into square blocks,
/// each block a region with a random K-sparse convex code.
struct BenchInputs {
  Codebook codebook;
  std::vector<std::vector<SparseCode>> codes;  // per view, per region
  std::vector<RegionMap> maps;
};

/// With `identity_codebook` the atoms are the coordinate axes (requires L = D).
inline BenchInputs make_bench_inputs(const std::vector<Camera>& cameras, std::size_t dim, std::size_t k,
                                     std::size_t atoms, std::uint64_t seed, bool identity_codebook = false,
                                     int block = 16) {
  if (k < 1 || k > atoms) throw ConfigError("bench needs 1 <= K <= L");
  if (identity_codebook && atoms != dim) throw ConfigError("identity codebook needs L = D");
  std::mt19937_64 rng(seed);
  BenchInputs in;
  in.codebook.basis.resize(static_cast<Eigen::Index>(atoms), static_cast<Eigen::Index>(dim));
  if (identity_codebook)
    in.codebook.basis.setIdentity();
  else
    for (std::size_t l = 0; l < atoms; ++l) in.codebook.basis.row(Eigen::Index(l)) = random_unit_vector(dim, rng).transpose();
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  for (const auto& cam : cameras) {
    RegionMap m;
    m.width = cam.width;
    m.height = cam.height;
    const int bx = (cam.width + block - 1) / block, by = (cam.height + block - 1) / block;
    m.region_count = static_cast<std::uint32_t>(bx * by);
    m.ids.resize(cam.pixel_count());
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) m.ids[std::size_t(y) * cam.width + x] = std::uint32_t((y / block) * bx + x / block);
    std::vector<SparseCode> codes(m.region_count);
    std::vector<std::uint32_t> perm(atoms);
    for (auto& code : codes) {
      std::iota(perm.begin(), perm.end(), 0u);
      std::shuffle(perm.begin(), perm.end(), rng);
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        code.entries.push_back({perm[j], unit(rng)});
        sum += code.entries.back().coefficient;
      }
      for (auto& e : code.entries) e.coefficient /= sum;
    }
    in.maps.push_back(std::move(m));
    in.codes.push_back(std::move(codes));
  }
  return in;
}

/// Largest per-Gaussian relative difference between the dense field and the
/// decoded, L1-normalized sparse accumulator.
inline double linearity_gap(const DenseField& dense, const CoefficientAccumulator& acc, const Codebook& codebook) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < acc.mass.rows(); ++i) {
    const double mass = acc.mass.row(i).sum();
    const Eigen::RowVectorXd ref = dense.features.row(i);
    if (mass <= 0.0) {
      worst = std::max(worst, ref.norm() > 0 ? 1.0 : 0.0);
      continue;
    }
    const Eigen::RowVectorXd decoded = acc.mass.row(i) * codebook.basis / mass;
    const double scale = std::max(ref.norm(), 1e-300);
    worst = std::max(worst, (decoded - ref).norm() / scale);
  }
  return worst;
}

/// Times dense (D-vector) and sparse (K-entry) uplifting over identical
/// fragment sets. Both paths are checked against each other first; a
/// mismatch above 1e-5 relative aborts the benchmark.
inline BenchReport bench_uplift(const GaussianScene& scene, const std::vector<Camera>& cameras, std::size_t dim,
                                std::size_t k, std::size_t atoms, std::size_t repetitions, int threads = 1,
                                std::uint64_t seed = 0, bool identity_codebook = false) {
  if (repetitions < 1) throw ConfigError("bench needs at least one repetition");
  BenchReport r;
  r.gaussians = scene.size();
  r.views = cameras.size();
  r.dim = dim;
  r.sparsity = k;
  r.atoms = atoms;
  r.repetitions = repetitions;
  r.threads = threads;

  const auto views = rasterize_views(scene, cameras, threads);
  for (const auto& v : views) r.fragments += v.fragment_count();
  const auto inputs = make_bench_inputs(cameras, dim, k, atoms, seed, identity_codebook);
  std::vector<CodeImage> code_images;
  std::vector<FeatureImage> feature_images;
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    code_images.emplace_back(inputs.maps[v], inputs.codes[v]);
    feature_images.push_back(decoded_feature_image(inputs.maps[v], inputs.codes[v], inputs.codebook));
  }

  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };

  // Validation doubles as the warm-up pass.
  {
    auto dense = uplift_dense(views, feature_images, scene.size(), threads);
    auto acc = accumulate_sparse(views, code_images, scene.size(), atoms, threads);
    r.max_relative_error = linearity_gap(dense, acc, inputs.codebook);
    if (!(r.max_relative_error <= 1e-5))
      throw Error("dense and sparse uplift disagree (relative error " + std::to_string(r.max_relative_error) + ")");
  }

  std::vector<double> dense_t, sparse_t;
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    auto t0 = clock::now();
    auto dense = uplift_dense(views, feature_images, scene.size(), threads);
    auto t1 = clock::now();
    auto level = uplift_sparse(views, code_images, inputs.codebook, scene.size(), k, threads);
    auto t2 = clock::now();
    dense_t.push_back(seconds(t0, t1));
    sparse_t.push_back(seconds(t1, t2));
    r.sparse_level_bytes = level.storage_bytes();
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  r.dense_seconds = median(dense_t);
  r.sparse_seconds = std::max(median(sparse_t), 1e-9);
  r.speedup = r.dense_seconds / r.sparse_seconds;
  r.sparse_payload_bytes = scene.size() * k * 8;
  r.dense_bytes = scene.size() * dim * 4;
  return r;
}

}  // namespace scoup
