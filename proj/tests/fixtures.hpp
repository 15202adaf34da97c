#pragma once

#include "scoup/common.hpp"
#include "scoup/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace scoup::testing {

/// Unit features built from K-sparse convex combinations of a random unit
/// codebook plus isotropic noise. Weights are uniform on the simplex.
struct SparseMixture {
  RowMatrix codebook;  // L x D
  RowMatrix clean;     // R x D, exact combinations
  RowMatrix features;  // R x D, noisy and unit-normalized
  double oracle_cosine = 0.0;
};

inline SparseMixture make_sparse_mixture(std::size_t atoms, std::size_t dim, std::size_t rows, std::size_t k,
                                         double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  SparseMixture m;
  m.codebook.resize(Eigen::Index(atoms), Eigen::Index(dim));
  for (Eigen::Index i = 0; i < m.codebook.size(); ++i) m.codebook.data()[i] = normal(rng);
  m.codebook.rowwise().normalize();
  m.clean.setZero(Eigen::Index(rows), Eigen::Index(dim));
  m.features.resize(Eigen::Index(rows), Eigen::Index(dim));
  std::vector<std::size_t> perm(atoms);
  for (std::size_t r = 0; r < rows; ++r) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> w(k);
    double sum = 0.0;
    for (auto& x : w) sum += x = expo(rng);
    for (std::size_t j = 0; j < k; ++j) m.clean.row(Eigen::Index(r)) += w[j] / sum * m.codebook.row(Eigen::Index(perm[j]));
    Eigen::RowVectorXd f = m.clean.row(Eigen::Index(r));
    for (Eigen::Index d = 0; d < f.size(); ++d) f[d] += noise * normal(rng);
    m.oracle_cosine += f.dot(m.clean.row(Eigen::Index(r))) / (f.norm() * m.clean.row(Eigen::Index(r)).norm());
    m.features.row(Eigen::Index(r)) = f.normalized();
  }
  m.oracle_cosine /= double(rows);
  return m;
}

/// Central finite-difference gradient of f with respect to every entry of x.
template <typename F>
RowMatrix numeric_gradient(RowMatrix x, F&& f, double step) {
  RowMatrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + step;
    const double hi = f(x);
    x.data()[i] = keep - step;
    const double lo = f(x);
    x.data()[i] = keep;
    g.data()[i] = (hi - lo) / (2.0 * step);
  }
  return g;
}

inline std::vector<Gaussian> random_gaussians(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> nrm(0, 1);
  std::vector<Gaussian> gs(n);
  for (auto& g : gs) {
    g.center = {float(-1 + 2 * u(rng)), float(-1 + 2 * u(rng)), float(2 + 3 * u(rng))};
    for (auto& s : g.log_scale) s = float(std::log(0.03 + 0.25 * u(rng)));
    for (auto& q : g.rotation) q = float(nrm(rng));
    g.opacity_logit = float(-2 + 6 * u(rng));
    g.base_color = {float(nrm(rng)), float(nrm(rng)), float(nrm(rng))};
  }
  return gs;
}

// Independent per-pixel reference: own EWA projection, every Gaussian in
// front of the near plane tested at every pixel, no extent culling.
struct OracleFragment {
  std::uint32_t id;
  double e;
};

inline std::vector<std::vector<OracleFragment>> brute_force(const GaussianScene& scene, const Camera& cam, std::vector<double>* final_t) {
  struct Proj {
    std::uint32_t id;
    double depth, mx, my, a, b, c, opacity;
  };
  std::vector<Proj> projs;
  const Mat3 w = cam.world_to_camera.topLeftCorner<3, 3>();
  const Vec3 t = cam.world_to_camera.topRightCorner<3, 1>();
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const auto& g = scene[i];
    const Vec3 p = w * g.center + t;
    if (p.z() <= 0.2) continue;
    Mat3 r = g.rotation.toRotationMatrix();
    Mat3 s = Mat3::Zero();
    for (int k = 0; k < 3; ++k) s(k, k) = g.scale[k] * g.scale[k];
    const Mat3 cov = r * s * r.transpose();
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx / p.z(), 0, -cam.fx * p.x() / (p.z() * p.z()), 0, cam.fy / p.z(), -cam.fy * p.y() / (p.z() * p.z());
    Eigen::Matrix2d c2 = jac * w * cov * w.transpose() * jac.transpose();
    c2(0, 0) += 0.3;
    c2(1, 1) += 0.3;
    const double off = 0.5 * (c2(0, 1) + c2(1, 0));
    c2(0, 1) = c2(1, 0) = off;
    const Eigen::Matrix2d inv = c2.inverse();
    projs.push_back({std::uint32_t(i), p.z(), cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy, inv(0, 0),
                     inv(0, 1), inv(1, 1), g.opacity});
  }
  std::stable_sort(projs.begin(), projs.end(), [](const Proj& a, const Proj& b) { return a.depth < b.depth; });
  std::vector<std::vector<OracleFragment>> out(cam.pixel_count());
  if (final_t) final_t->assign(cam.pixel_count(), 1.0);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      double trans = 1.0;
      for (const auto& pr : projs) {
        if (trans < 1e-4) break;
        const double dx = x + 0.5 - pr.mx, dy = y + 0.5 - pr.my;
        const double power = -0.5 * (pr.a * dx * dx + pr.c * dy * dy) - pr.b * dx * dy;
        if (power > 0) continue;
        const double alpha = std::min(0.99, pr.opacity * std::exp(power));
        if (alpha < 1.0 / 255.0) continue;
        out[std::size_t(y) * cam.width + x].push_back({pr.id, alpha * trans});
        trans *= 1 - alpha;
      }
      if (final_t) (*final_t)[std::size_t(y) * cam.width + x] = trans;
    }
  return out;
}

}  // namespace scoup::testing
