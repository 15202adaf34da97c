#pragma once

#include "scoup/common.hpp"
#include "scoup/scene.hpp"

#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <unordered_map>

namespace scoup {

// Rasterization constants follow the reference 3DGS conventions.
inline constexpr double kNearPlane = 0.2;
inline constexpr double kLowPass = 0.3;
inline constexpr double kAlphaClamp = 0.99;
inline constexpr double kAlphaSkip = 1.0 / 255.0;
inline constexpr double kTransmittanceStop = 1e-4;

struct ProjectedGaussian {
  Eigen::Vector2d mean2d;
  Eigen::Matrix2d cov2d;
  double conic_a = 0, conic_b = 0, conic_c = 0;  // upper triangle of cov2d^-1
  double depth = 0;
  double radius = 0;   // 3 sigma along the major axis
  double support = 0;  // distance beyond which alpha < 1/255 for this opacity
  double opacity = 0;
};

/// EWA projection. Returns nullopt when the Gaussian is behind the near
/// plane, can never reach the alpha threshold, or lies entirely off-image.
inline std::optional<ProjectedGaussian> project(const ActivatedGaussian& g, const Camera& cam) {
  const Mat3 w = cam.rotation();
  const Vec3 pc = w * g.center + cam.translation();
  const double z = pc.z();
  if (z <= kNearPlane) return std::nullopt;

  const Mat3 rs = g.rotation.toRotationMatrix() * g.scale.asDiagonal();
  const Mat3 cov3d = rs * rs.transpose();

  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx / z, 0.0, -cam.fx * pc.x() / (z * z), 0.0, cam.fy / z, -cam.fy * pc.y() / (z * z);
  const Eigen::Matrix<double, 2, 3> t = j * w;

  ProjectedGaussian out;
  out.cov2d = t * cov3d * t.transpose();
  out.cov2d(0, 0) += kLowPass;
  out.cov2d(1, 1) += kLowPass;
  out.cov2d(0, 1) = out.cov2d(1, 0) = 0.5 * (out.cov2d(0, 1) + out.cov2d(1, 0));

  const double a = out.cov2d(0, 0), b = out.cov2d(0, 1), c = out.cov2d(1, 1);
  const double det = a * c - b * b;
  if (!(det > 0)) return std::nullopt;
  out.conic_a = c / det;
  out.conic_b = -b / det;
  out.conic_c = a / det;

  const double mid = 0.5 * (a + c);
  const double lambda_max = mid + std::sqrt(std::max(0.0, 0.25 * (a - c) * (a - c) + b * b));
  out.radius = 3.0 * std::sqrt(lambda_max);
  out.opacity = g.opacity;
  if (g.opacity * 255.0 <= 1.0) return std::nullopt;
  out.support = std::sqrt(2.0 * lambda_max * std::log(255.0 * g.opacity)) + 1e-6;

  out.mean2d = Eigen::Vector2d(cam.fx * pc.x() / z + cam.cx, cam.fy * pc.y() / z + cam.cy);
  out.depth = z;

  if (out.mean2d.x() + out.support < 0.5 || out.mean2d.x() - out.support > cam.width - 0.5 ||
      out.mean2d.y() + out.support < 0.5 || out.mean2d.y() - out.support > cam.height - 0.5)
    return std::nullopt;
  return out;
}

/// Alpha of a projected Gaussian at the center of pixel (x, y), before the
/// skip threshold is applied.
inline double splat_alpha(const ProjectedGaussian& pg, int x, int y) {
  const double dx = x + 0.5 - pg.mean2d.x();
  const double dy = y + 0.5 - pg.mean2d.y();
  const double power = -0.5 * (pg.conic_a * dx * dx + pg.conic_c * dy * dy) - pg.conic_b * dx * dy;
  if (power > 0.0) return 0.0;
  return std::min(kAlphaClamp, pg.opacity * std::exp(power));
}

struct Fragment {
  std::uint32_t gaussian_id;
  float blend_weight;
};

/// Per-pixel front-to-back fragment lists in CSR form.
class PixelFragments {
 public:
  PixelFragments() = default;
  PixelFragments(int width, int height, std::vector<std::uint32_t> offsets, std::vector<Fragment> fragments,
                 std::vector<double> transmittance)
      : width_(width),
        height_(height),
        offsets_(std::move(offsets)),
        fragments_(std::move(fragments)),
        transmittance_(std::move(transmittance)) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return std::size_t(width_) * std::size_t(height_); }
  std::size_t fragment_count() const { return fragments_.size(); }

  std::span<const Fragment> pixel(std::size_t p) const {
    return {fragments_.data() + offsets_[p], fragments_.data() + offsets_[p + 1]};
  }
  /// Transmittance left after the last fragment of pixel p.
  double transmittance(std::size_t p) const { return transmittance_[p]; }
  std::span<const Fragment> all() const { return fragments_; }
  const std::vector<std::uint32_t>& offsets() const { return offsets_; }

 private:
  int width_ = 0, height_ = 0;
  std::vector<std::uint32_t> offsets_{0};
  std::vector<Fragment> fragments_;
  std::vector<double> transmittance_;
};

/// Projects every Gaussian; culled entries are nullopt.
inline std::vector<std::optional<ProjectedGaussian>> project_scene(const GaussianScene& scene, const Camera& cam) {
  std::vector<std::optional<ProjectedGaussian>> out(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) out[i] = project(scene[i], cam);
  return out;
}

/// Visible Gaussian ids sorted by ascending depth, ties to the lower index.
inline std::vector<std::uint32_t> depth_order(const std::vector<std::optional<ProjectedGaussian>>& projected) {
  std::vector<std::uint32_t> order;
  order.reserve(projected.size());
  for (std::size_t i = 0; i < projected.size(); ++i)
    if (projected[i]) order.push_back(static_cast<std::uint32_t>(i));
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return projected[a]->depth < projected[b]->depth; });
  return order;
}

/// Front-to-back alpha compositing producing e_i(v, p) for every pixel.
/// Work is split into horizontal bands; each pixel sees the same Gaussian
/// sequence regardless of the band layout, so output is thread-count
/// independent.
inline PixelFragments rasterize_fragments(const GaussianScene& scene, const Camera& cam, int threads = 1) {
  const auto projected = project_scene(scene, cam);
  const auto order = depth_order(projected);
  const int width = cam.width, height = cam.height;
  const std::size_t pixels = cam.pixel_count();

  struct Hit {
    std::uint32_t pixel;
    Fragment frag;
  };
  std::vector<double> transmittance(pixels, 1.0);
  const std::size_t bands = worker_count(std::size_t(height), threads);
  std::vector<std::vector<Hit>> band_hits(bands);

  parallel_for(std::size_t(height), threads, [&](std::size_t row_begin, std::size_t row_end, int worker) {
    auto& hits = band_hits[worker];
    const int y_lo = static_cast<int>(row_begin), y_hi = static_cast<int>(row_end);
    for (std::uint32_t id : order) {
      const auto& pg = *projected[id];
      const int x0 = std::max(0, static_cast<int>(std::floor(pg.mean2d.x() - pg.support - 0.5)));
      const int x1 = std::min(width - 1, static_cast<int>(std::ceil(pg.mean2d.x() + pg.support - 0.5)));
      const int y0 = std::max(y_lo, static_cast<int>(std::floor(pg.mean2d.y() - pg.support - 0.5)));
      const int y1 = std::min(y_hi - 1, static_cast<int>(std::ceil(pg.mean2d.y() + pg.support - 0.5)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const std::size_t p = std::size_t(y) * width + x;
          double& t = transmittance[p];
          if (t < kTransmittanceStop) continue;
          const double alpha = splat_alpha(pg, x, y);
          if (alpha < kAlphaSkip) continue;
          hits.push_back({static_cast<std::uint32_t>(p), {id, static_cast<float>(alpha * t)}});
          t *= 1.0 - alpha;
        }
      }
    }
  });

  // Stable counting sort by pixel keeps each pixel's depth order.
  std::vector<std::uint32_t> offsets(pixels + 1, 0);
  std::size_t total = 0;
  for (const auto& hits : band_hits) {
    total += hits.size();
    for (const auto& h : hits) ++offsets[h.pixel + 1];
  }
  for (std::size_t p = 0; p < pixels; ++p) offsets[p + 1] += offsets[p];
  std::vector<Fragment> fragments(total);
  std::vector<std::uint32_t> cursor(offsets.begin(), offsets.end() - 1);
  for (const auto& hits : band_hits)
    for (const auto& h : hits) fragments[cursor[h.pixel]++] = h.frag;

  return PixelFragments(width, height, std::move(offsets), std::move(fragments), std::move(transmittance));
}

/// Per-pixel sum of payload(i) * e_i. Payload rows beyond payload.rows()
/// count as missing and contribute zero. Output is pixels x channels.
inline RowMatrix blend_payload(const PixelFragments& frags, const RowMatrix& payload, int threads = 1) {
  const Eigen::Index channels = payload.cols();
  RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(frags.pixel_count()), channels);
  parallel_for(frags.pixel_count(), threads, [&](std::size_t begin, std::size_t end, int) {
    for (std::size_t p = begin; p < end; ++p) {
      auto dst = out.row(static_cast<Eigen::Index>(p));
      for (const Fragment& f : frags.pixel(p)) {
        if (f.gaussian_id >= payload.rows()) continue;
        dst.noalias() += double(f.blend_weight) * payload.row(f.gaussian_id);
      }
    }
  });
  return out;
}

/// Map-form payload; ids absent from the map contribute zero.
inline RowMatrix blend_payload(const PixelFragments& frags, const std::unordered_map<std::uint32_t, Eigen::VectorXd>& payload,
                               int threads = 1) {
  Eigen::Index dim = -1;
  std::uint32_t max_id = 0;
  for (const auto& [id, v] : payload) {
    if (dim >= 0 && v.size() != dim) throw DataError("payload vectors differ in dimension");
    dim = v.size();
    max_id = std::max(max_id, id);
  }
  if (dim < 0) return RowMatrix::Zero(static_cast<Eigen::Index>(frags.pixel_count()), 0);
  RowMatrix dense = RowMatrix::Zero(max_id + 1, dim);
  for (const auto& [id, v] : payload) dense.row(id) = v.transpose();
  return blend_payload(frags, dense, threads);
}

inline constexpr double kShC0 = 0.28209479177387814;

/// Degree-0 SH colors to [0,1] RGB, one row per Gaussian.
inline RowMatrix base_colors(const GaussianScene& scene) {
  RowMatrix colors(static_cast<Eigen::Index>(scene.size()), 3);
  for (std::size_t i = 0; i < scene.size(); ++i)
    for (int c = 0; c < 3; ++c)
      colors(static_cast<Eigen::Index>(i), c) = std::clamp(kShC0 * scene[i].sh_dc[c] + 0.5, 0.0, 1.0);
  return colors;
}

inline RowMatrix render_rgb(const GaussianScene& scene, const Camera& cam, int threads = 1) {
  return blend_payload(rasterize_fragments(scene, cam, threads), base_colors(scene), threads);
}

}  // namespace scoup
