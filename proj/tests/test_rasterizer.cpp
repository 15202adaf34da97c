#include "scoup/rasterizer.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace scoup;
using scoup::testing::brute_force;
using scoup::testing::random_gaussians;

namespace {

Camera identity_camera(double f, int w, int h, double cx, double cy) {
  Camera c;
  c.fx = c.fy = f;
  c.cx = cx;
  c.cy = cy;
  c.width = w;
  c.height = h;
  return c;
}

float logit(double p) { return static_cast<float>(std::log(p / (1.0 - p))); }

Gaussian iso(Vec3 center, double scale, double opacity) {
  Gaussian g;
  g.center = {float(center.x()), float(center.y()), float(center.z())};
  const float ls = static_cast<float>(std::log(scale));
  g.log_scale = {ls, ls, ls};
  g.opacity_logit = logit(opacity);
  return g;
}

}  // namespace

TEST(Project, IsotropicOnAxisMatchesClosedForm) {
  const double f = 80, d = 3, s = 0.2;
  auto pg = project(activate(iso(Vec3(0, 0, d), s, 0.9)), identity_camera(f, 64, 64, 32, 32));
  ASSERT_TRUE(pg);
  const double expected = (f * s / d) * (f * s / d) + 0.3;
  EXPECT_NEAR(pg->cov2d(0, 0), expected, 1e-5 * expected);
  EXPECT_NEAR(pg->cov2d(1, 1), expected, 1e-5 * expected);
  EXPECT_NEAR(pg->cov2d(0, 1), 0.0, 1e-9);
  EXPECT_NEAR(pg->depth, d, 1e-6);
  EXPECT_NEAR(pg->radius, 3 * std::sqrt(expected), 1e-4);
}

TEST(Project, BehindCameraAndNearPlaneAreCulled) {
  const auto cam = identity_camera(80, 64, 64, 32, 32);
  EXPECT_FALSE(project(activate(iso(Vec3(0, 0, -1), 0.2, 0.9)), cam));
  EXPECT_FALSE(project(activate(iso(Vec3(0, 0, 0.19), 0.2, 0.9)), cam));
  EXPECT_TRUE(project(activate(iso(Vec3(0, 0, 0.21), 0.2, 0.9)), cam));
}

TEST(Project, OffImageIsCulled) {
  const auto cam = identity_camera(80, 64, 64, 32, 32);
  EXPECT_FALSE(project(activate(iso(Vec3(50, 0, 3), 0.01, 0.9)), cam));
}

TEST(Project, ConicInvertsCovariance) {
  std::mt19937_64 rng(7);
  const auto cam = look_at(Vec3(0.3, -4, 1), Vec3::Zero(), 60, 48, 40);
  int checked = 0;
  for (const auto& g : random_gaussians(200, rng)) {
    Gaussian h = g;
    h.center[2] -= 3.5f;  // centered on the look-at target
    auto pg = project(activate(h), cam);
    if (!pg) continue;
    Eigen::Matrix2d conic;
    conic << pg->conic_a, pg->conic_b, pg->conic_b, pg->conic_c;
    EXPECT_LT((pg->cov2d * conic - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-6);
    ++checked;
  }
  EXPECT_GT(checked, 50);
}

TEST(Rasterize, SingleOpaqueGaussianAtPixelCenter) {
  const auto cam = identity_camera(50, 65, 65, 32.5, 32.5);
  GaussianScene scene({iso(Vec3(0, 0, 2), 0.05, 0.99)});
  auto frags = rasterize_fragments(scene, cam);
  auto px = frags.pixel(32 * 65 + 32);
  ASSERT_EQ(px.size(), 1u);
  EXPECT_EQ(px[0].gaussian_id, 0u);
  EXPECT_NEAR(px[0].blend_weight, 0.99, 1e-6);
}

TEST(Rasterize, TwoCoincidentHalfAlphaGaussians) {
  const auto cam = identity_camera(50, 65, 65, 32.5, 32.5);
  GaussianScene scene({iso(Vec3(0, 0, 2), 0.05, 0.5), iso(Vec3(0, 0, 2), 0.05, 0.5)});
  auto px = rasterize_fragments(scene, cam).pixel(32 * 65 + 32);
  ASSERT_EQ(px.size(), 2u);
  EXPECT_EQ(px[0].gaussian_id, 0u);
  EXPECT_EQ(px[1].gaussian_id, 1u);
  EXPECT_NEAR(px[0].blend_weight, 0.5, 1e-7);
  EXPECT_NEAR(px[1].blend_weight, 0.25, 1e-7);
}

TEST(Rasterize, MatchesBruteForceOracle) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::mt19937_64 rng(seed);
    GaussianScene scene(random_gaussians(50, rng));
    const auto cam = identity_camera(30, 32, 32, 16, 16);
    auto frags = rasterize_fragments(scene, cam);
    std::vector<double> oracle_t;
    auto oracle = brute_force(scene, cam, &oracle_t);
    std::size_t total = 0;
    for (std::size_t p = 0; p < cam.pixel_count(); ++p) {
      auto got = frags.pixel(p);
      ASSERT_EQ(got.size(), oracle[p].size()) << "seed " << seed << " pixel " << p;
      for (std::size_t k = 0; k < got.size(); ++k) {
        EXPECT_EQ(got[k].gaussian_id, oracle[p][k].id);
        EXPECT_NEAR(got[k].blend_weight, oracle[p][k].e, 1e-6);
      }
      EXPECT_NEAR(frags.transmittance(p), oracle_t[p], 1e-6);
      total += got.size();
    }
    EXPECT_GT(total, 500u);
  }
}

TEST(Rasterize, BlendWeightsSumBelowOneAndMatchTransmittance) {
  std::mt19937_64 rng(11);
  GaussianScene scene(random_gaussians(300, rng));
  const auto cam = identity_camera(30, 32, 32, 16, 16);
  auto frags = rasterize_fragments(scene, cam);
  for (std::size_t p = 0; p < frags.pixel_count(); ++p) {
    double sum = 0;
    for (const auto& f : frags.pixel(p)) {
      EXPECT_GT(f.blend_weight, 0.f);
      EXPECT_LE(f.blend_weight, 1.f);
      sum += f.blend_weight;
    }
    EXPECT_LE(sum, 1 + 1e-6);
    EXPECT_NEAR(1 - sum, frags.transmittance(p), 1e-6);
  }
}

TEST(Rasterize, FragmentsAscendInDepth) {
  std::mt19937_64 rng(12);
  GaussianScene scene(random_gaussians(200, rng));
  const auto cam = identity_camera(30, 32, 32, 16, 16);
  auto frags = rasterize_fragments(scene, cam);
  for (std::size_t p = 0; p < frags.pixel_count(); ++p) {
    auto px = frags.pixel(p);
    for (std::size_t k = 1; k < px.size(); ++k) {
      const double d0 = (cam.rotation() * scene[px[k - 1].gaussian_id].center + cam.translation()).z();
      const double d1 = (cam.rotation() * scene[px[k].gaussian_id].center + cam.translation()).z();
      EXPECT_LE(d0, d1);
    }
  }
}

TEST(Rasterize, SceneOrderPermutationLeavesFragmentsUnchanged) {
  std::mt19937_64 rng(13);
  auto gs = random_gaussians(80, rng);
  std::vector<std::uint32_t> perm(gs.size());
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Gaussian> shuffled(gs.size());
  for (std::size_t i = 0; i < gs.size(); ++i) shuffled[i] = gs[perm[i]];
  const auto cam = identity_camera(30, 32, 32, 16, 16);
  auto a = rasterize_fragments(GaussianScene(gs), cam);
  auto b = rasterize_fragments(GaussianScene(shuffled), cam);
  for (std::size_t p = 0; p < a.pixel_count(); ++p) {
    auto fa = a.pixel(p), fb = b.pixel(p);
    ASSERT_EQ(fa.size(), fb.size());
    for (std::size_t k = 0; k < fa.size(); ++k) {
      EXPECT_EQ(fa[k].gaussian_id, perm[fb[k].gaussian_id]);
      EXPECT_EQ(fa[k].blend_weight, fb[k].blend_weight);
    }
  }
}

TEST(Rasterize, OutputIndependentOfThreadCount) {
  std::mt19937_64 rng(14);
  GaussianScene scene(random_gaussians(150, rng));
  const auto cam = identity_camera(30, 32, 32, 16, 16);
  auto one = rasterize_fragments(scene, cam, 1);
  for (int threads : {2, 3, 7}) {
    auto many = rasterize_fragments(scene, cam, threads);
    ASSERT_EQ(one.fragment_count(), many.fragment_count());
    EXPECT_EQ(one.offsets(), many.offsets());
    for (std::size_t k = 0; k < one.fragment_count(); ++k) {
      EXPECT_EQ(one.all()[k].gaussian_id, many.all()[k].gaussian_id);
      EXPECT_EQ(one.all()[k].blend_weight, many.all()[k].blend_weight);
    }
  }
}

TEST(BlendPayload, SingleFullWeightFragmentIsIdentity) {
  PixelFragments frags(1, 1, {0, 1}, {{0, 1.0f}}, {0.0});
  RowMatrix payload(1, 3);
  payload << 0.25, -2, 7;
  EXPECT_EQ(blend_payload(frags, payload), payload);
}

TEST(BlendPayload, ConstantPayloadScalesWithCoverage) {
  std::mt19937_64 rng(21);
  GaussianScene scene(random_gaussians(60, rng));
  auto frags = rasterize_fragments(scene, identity_camera(30, 32, 32, 16, 16));
  RowMatrix payload(60, 2);
  payload.col(0).setConstant(1.5);
  payload.col(1).setConstant(-0.5);
  auto out = blend_payload(frags, payload);
  for (std::size_t p = 0; p < frags.pixel_count(); ++p) {
    double sum = 0;
    for (const auto& f : frags.pixel(p)) sum += f.blend_weight;
    EXPECT_NEAR(out(Eigen::Index(p), 0), 1.5 * sum, 1e-9);
    EXPECT_NEAR(out(Eigen::Index(p), 1), -0.5 * sum, 1e-9);
  }
}

TEST(BlendPayload, MatchesScalarLoopAndIsLinear) {
  std::mt19937_64 rng(22);
  GaussianScene scene(random_gaussians(70, rng));
  auto frags = rasterize_fragments(scene, identity_camera(30, 32, 32, 16, 16));
  RowMatrix p = RowMatrix::Random(70, 5), q = RowMatrix::Random(70, 5);
  auto out = blend_payload(frags, p, 3);
  for (std::size_t px = 0; px < frags.pixel_count(); ++px) {
    for (int c = 0; c < 5; ++c) {
      double ref = 0;
      for (const auto& f : frags.pixel(px)) ref += p(f.gaussian_id, c) * double(f.blend_weight);
      EXPECT_NEAR(out(Eigen::Index(px), c), ref, 1e-6);
    }
  }
  const double a = 0.7, b = -2.3;
  RowMatrix lhs = blend_payload(frags, RowMatrix(a * p + b * q));
  RowMatrix rhs = a * blend_payload(frags, p) + b * blend_payload(frags, q);
  EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, rhs.cwiseAbs().maxCoeff()));
}

TEST(BlendPayload, MissingIdsContributeZeroAndDimsMustAgree) {
  PixelFragments frags(1, 1, {0, 2}, {{0, 0.5f}, {5, 0.25f}}, {0.25});
  std::unordered_map<std::uint32_t, Eigen::VectorXd> payload;
  payload[0] = Eigen::Vector2d(2, 4);
  auto out = blend_payload(frags, payload);
  EXPECT_DOUBLE_EQ(out(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(out(0, 1), 2.0);
  payload[1] = Eigen::Vector3d(1, 1, 1);
  EXPECT_THROW(blend_payload(frags, payload), DataError);
}

TEST(RenderRgb, EmptyPixelWhiteGaussianAndDefinition) {
  const auto cam = identity_camera(50, 65, 65, 32.5, 32.5);
  Gaussian white = iso(Vec3(0, 0, 2), 0.05, 0.99);
  white.base_color = {10.f, 10.f, 10.f};
  GaussianScene scene({white});
  auto rgb = render_rgb(scene, cam);
  EXPECT_EQ(rgb.row(0), Eigen::RowVector3d::Zero());
  const auto center = rgb.row(32 * 65 + 32);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(center[c], 0.99, 1e-6);

  std::mt19937_64 rng(31);
  GaussianScene random_scene(random_gaussians(40, rng));
  const auto cam2 = identity_camera(30, 32, 32, 16, 16);
  EXPECT_EQ(render_rgb(random_scene, cam2), blend_payload(rasterize_fragments(random_scene, cam2), base_colors(random_scene)));
}
