#pragma once

#include "scoup/analysis.hpp"
#include "scoup/common.hpp"
#include "scoup/rasterizer.hpp"
#include "scoup/scene.hpp"
#include "scoup/semantic_query.hpp"
#include "scoup/sparse_coding.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace scoup {

struct SynthesisSpec {
  std::size_t gaussians = 300;
  std::size_t objects = 3;
  std::size_t views = 6;
  int width = 64;
  int height = 64;
  std::size_t dim = 32;
  std::size_t levels = 1;
  double noise_rate = 0.0;     // per (level, view, region) label corruption
  double gaussian_scale = 0.0; // 0 = derived from Gaussians per object
  double coverage = 0.02;      // minimum blended object mass for a pixel to get a region
  std::size_t tracks = 64;
};

/// Region layout and features of one view at one level.
struct SyntheticView {
  RegionMap map;                         // local region ids
  RowMatrix features;                    // region_count x D
  std::vector<std::size_t> region_object;
  std::vector<bool> corrupted;
};

struct SyntheticBundle {
  GaussianScene scene;
  std::vector<Camera> cameras;
  std::vector<std::size_t> gaussian_object;
  std::vector<std::vector<SyntheticView>> levels;  // [level][view]
  RowMatrix object_vectors;                        // objects x D, clean
  QueryFile queries;                               // one query per object
  std::vector<std::vector<std::vector<std::uint8_t>>> gt_masks;  // [view][object]
  TrackSet tracks;

  std::size_t corrupted_regions() const {
    std::size_t n = 0;
    for (const auto& level : levels)
      for (const auto& v : level) n += static_cast<std::size_t>(std::count(v.corrupted.begin(), v.corrupted.end(), true));
    return n;
  }
  std::size_t total_regions() const {
    std::size_t n = 0;
    for (const auto& level : levels)
      for (const auto& v : level) n += v.map.region_count;
    return n;
  }
};

inline std::string object_label(std::size_t k) { return "object_" + std::to_string(k); }

namespace detail {

/// Rows are orthonormal when count <= dim, otherwise independent unit vectors.
inline RowMatrix semantic_basis(std::size_t count, std::size_t dim, std::mt19937_64& rng) {
  RowMatrix basis(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < count; ++i) {
    Eigen::RowVectorXd v = random_unit_vector(dim, rng).transpose();
    if (i < dim) {
      for (std::size_t j = 0; j < i; ++j) v -= v.dot(basis.row(Eigen::Index(j))) * basis.row(Eigen::Index(j));
      for (std::size_t j = 0; j < i; ++j) v -= v.dot(basis.row(Eigen::Index(j))) * basis.row(Eigen::Index(j));
    }
    basis.row(Eigen::Index(i)) = v.normalized();
  }
  return basis;
}

/// Gaussian clusters on a ring plus an orbit of cameras above it. Consumes
/// `rng` first so semantics drawn afterwards stay reproducible.
inline void make_geometry(const SynthesisSpec& spec, std::mt19937_64& rng, GaussianScene& scene,
                          std::vector<Camera>& cameras, std::vector<std::size_t>& object_of) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double ring = spec.objects == 1 ? 0.0 : 1.0;
  const double spread = 0.16;
  std::vector<Vec3> centers(spec.objects);
  for (std::size_t k = 0; k < spec.objects; ++k) {
    const double a = 2.0 * std::numbers::pi * double(k) / double(spec.objects);
    centers[k] = Vec3(ring * std::cos(a), ring * std::sin(a), 0.0);
  }
  const double per_object = double(spec.gaussians) / double(spec.objects);
  const double scale = spec.gaussian_scale > 0 ? spec.gaussian_scale : std::cbrt(0.028 / per_object);

  std::vector<Gaussian> gaussians(spec.gaussians);
  object_of.resize(spec.gaussians);
  for (std::size_t i = 0; i < spec.gaussians; ++i) {
    const std::size_t k = i % spec.objects;
    object_of[i] = k;
    auto& g = gaussians[i];
    for (int a = 0; a < 3; ++a) {
      g.center[a] = static_cast<float>(centers[k][a] + spread * std::clamp(normal(rng), -2.5, 2.5));
      g.log_scale[a] = static_cast<float>(std::log(scale * (0.7 + 0.6 * uniform(rng))));
    }
    Eigen::Vector4d q(normal(rng), normal(rng), normal(rng), normal(rng));
    q.normalize();
    for (int a = 0; a < 4; ++a) g.rotation[a] = static_cast<float>(q[a]);
    g.opacity_logit = static_cast<float>(1.5 + uniform(rng));
    for (int c = 0; c < 3; ++c)
      g.base_color[c] = static_cast<float>((0.2 + 0.6 * double((k * 3 + c * 7) % 5) / 4.0 - 0.5) / kShC0);
  }
  scene = GaussianScene(std::move(gaussians));

  const double radius = 4.0, elevation = 2.5;
  const double extent = ring + 3.0 * spread + 0.2;
  const double distance = std::sqrt(radius * radius + elevation * elevation);
  const double focal = 0.5 * std::min(spec.width, spec.height) * distance / (extent * 1.15);
  for (std::size_t v = 0; v < spec.views; ++v) {
    const double a = 2.0 * std::numbers::pi * double(v) / double(spec.views) + 0.3;
    cameras.push_back(look_at(Vec3(radius * std::cos(a), radius * std::sin(a), elevation), Vec3::Zero(), focal,
                              spec.width, spec.height));
  }
}

}  // namespace detail

/// Scene and cameras only, without semantics or region maps. Identical to
/// the geometry synthesize_scene produces for the same spec and seed.
struct SyntheticGeometry {
  GaussianScene scene;
  std::vector<Camera> cameras;
};

inline SyntheticGeometry synthesize_geometry(const SynthesisSpec& spec, std::uint64_t seed) {
  if (spec.objects == 0 || spec.views == 0 || spec.gaussians < spec.objects) throw ConfigError("bad geometry spec");
  if (spec.width <= 0 || spec.height <= 0) throw ConfigError("bad synthesis size");
  std::mt19937_64 rng(seed);
  SyntheticGeometry g;
  std::vector<std::size_t> object_of;
  detail::make_geometry(spec, rng, g.scene, g.cameras, object_of);
  return g;
}

/// Deterministic scene with ground-truth semantics. Objects are Gaussian
/// clusters on a ring; cameras orbit above it. Region maps are the dominant
/// object per pixel of the rendered object-id payload.
inline SyntheticBundle synthesize_scene(const SynthesisSpec& spec, std::uint64_t seed) {
  if (spec.objects == 0) throw ConfigError("synthesis needs at least one object");
  if (spec.views == 0) throw ConfigError("synthesis needs at least one view");
  if (spec.gaussians < spec.objects) throw ConfigError("synthesis needs at least one Gaussian per object");
  if (spec.width <= 0 || spec.height <= 0 || spec.dim == 0 || spec.levels == 0) throw ConfigError("bad synthesis size");
  if (spec.noise_rate < 0.0 || spec.noise_rate > 1.0) throw ConfigError("noise rate must lie in [0, 1]");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  SyntheticBundle b;
  detail::make_geometry(spec, rng, b.scene, b.cameras, b.gaussian_object);

  // Semantics: object vectors and canonical phrases share one orthonormal
  // basis when the dimension allows it.
  RowMatrix basis = detail::semantic_basis(spec.objects + 4, spec.dim, rng);
  b.object_vectors = basis.topRows(static_cast<Eigen::Index>(spec.objects));
  for (std::size_t k = 0; k < spec.objects; ++k)
    b.queries.queries.push_back({object_label(k), b.object_vectors.row(Eigen::Index(k)).transpose()});
  for (std::size_t c = 0; c < 4; ++c)
    b.queries.canon.vectors[c] = basis.row(Eigen::Index(spec.objects + c)).transpose();

  // Dominant object per pixel.
  RowMatrix one_hot = RowMatrix::Zero(static_cast<Eigen::Index>(spec.gaussians), static_cast<Eigen::Index>(spec.objects));
  for (std::size_t i = 0; i < spec.gaussians; ++i) one_hot(Eigen::Index(i), Eigen::Index(b.gaussian_object[i])) = 1.0;
  std::vector<std::vector<std::uint32_t>> dominant(spec.views);
  b.gt_masks.resize(spec.views);
  for (std::size_t v = 0; v < spec.views; ++v) {
    const auto frags = rasterize_fragments(b.scene, b.cameras[v]);
    const RowMatrix mass = blend_payload(frags, one_hot);
    auto& dom = dominant[v];
    dom.assign(frags.pixel_count(), kUnassigned);
    b.gt_masks[v].assign(spec.objects, std::vector<std::uint8_t>(frags.pixel_count(), 0));
    for (std::size_t p = 0; p < frags.pixel_count(); ++p) {
      const auto row = mass.row(Eigen::Index(p));
      if (row.sum() < spec.coverage) continue;
      Eigen::Index best = 0;
      row.maxCoeff(&best);
      dom[p] = static_cast<std::uint32_t>(best);
      b.gt_masks[v][std::size_t(best)][p] = 1;
    }
  }

  // Region maps and (possibly corrupted) features per level.
  b.levels.resize(spec.levels);
  for (std::size_t l = 0; l < spec.levels; ++l) {
    for (std::size_t v = 0; v < spec.views; ++v) {
      SyntheticView sv;
      sv.map.width = spec.width;
      sv.map.height = spec.height;
      std::vector<std::uint32_t> local(spec.objects, kUnassigned);
      for (auto obj : dominant[v])
        if (obj != kUnassigned && local[obj] == kUnassigned) local[obj] = 0;
      std::uint32_t next = 0;
      for (std::size_t k = 0; k < spec.objects; ++k)
        if (local[k] != kUnassigned) {
          local[k] = next++;
          sv.region_object.push_back(k);
        }
      sv.map.region_count = next;
      sv.map.ids.resize(dominant[v].size());
      for (std::size_t p = 0; p < dominant[v].size(); ++p)
        sv.map.ids[p] = dominant[v][p] == kUnassigned ? kUnassigned : local[dominant[v][p]];

      sv.features.resize(next, static_cast<Eigen::Index>(spec.dim));
      sv.corrupted.assign(next, false);
      for (std::uint32_t r = 0; r < next; ++r) {
        const std::size_t obj = sv.region_object[r];
        Eigen::RowVectorXd f = b.object_vectors.row(Eigen::Index(obj));
        if (uniform(rng) < spec.noise_rate) {
          sv.corrupted[r] = true;
          if (spec.objects > 1) {
            std::uniform_int_distribution<std::size_t> other(0, spec.objects - 2);
            std::size_t wrong = other(rng);
            if (wrong >= obj) ++wrong;
            f = b.object_vectors.row(Eigen::Index(wrong));
          } else {
            f = random_unit_vector(spec.dim, rng).transpose();
          }
        }
        sv.features.row(r) = f;
      }
      b.levels[l].push_back(std::move(sv));
    }
  }

  // Tracks: Gaussian centers seen on their own object's pixels.
  std::uniform_int_distribution<std::size_t> pick(0, spec.gaussians - 1);
  for (std::size_t attempt = 0; attempt < spec.tracks * 8 && b.tracks.size() < spec.tracks; ++attempt) {
    const std::size_t i = pick(rng);
    Track t;
    t.point = b.scene[i].center;
    for (std::size_t v = 0; v < spec.views; ++v) {
      const auto& cam = b.cameras[v];
      const Vec3 pc = cam.rotation() * t.point + cam.translation();
      if (pc.z() <= kNearPlane) continue;
      const int x = static_cast<int>(std::floor(cam.fx * pc.x() / pc.z() + cam.cx));
      const int y = static_cast<int>(std::floor(cam.fy * pc.y() / pc.z() + cam.cy));
      if (x < 0 || y < 0 || x >= cam.width || y >= cam.height) continue;
      if (dominant[v][std::size_t(y) * cam.width + x] != b.gaussian_object[i]) continue;
      t.observations.push_back({v, x, y});
    }
    if (t.observations.size() >= 2) b.tracks.push_back(std::move(t));
  }
  return b;
}

/// Stacked region features for one level of a bundle.
inline RegionFeatureSet bundle_regions(const SyntheticBundle& b, std::size_t level) {
  std::vector<RegionMap> maps;
  std::vector<RowMatrix> feats;
  for (const auto& v : b.levels.at(level)) {
    maps.push_back(v.map);
    feats.push_back(v.features);
  }
  return assemble_regions(static_cast<int>(level), maps, feats);
}

}  // namespace scoup
