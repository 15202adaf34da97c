// Acceptance suite: one PASS/FAIL line per primary criterion. Tolerances and
// workloads are pinned below; nothing here reads a config file. Exit status
// is non-zero when any criterion fails.

#include "../fixtures.hpp"
#include "../test_util.hpp"
#include "scoup/pipeline.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>

using namespace scoup;
namespace t = scoup::testing;

namespace {

// Pinned tolerances and limits.
constexpr double kLinearityTol = 1e-5;
constexpr double kLinearitySeconds = 10.0;
constexpr double kRenderTol = 1e-5;
constexpr double kRenderSeconds = 5.0;
constexpr std::size_t kSoftTopKTrials = 10000;
constexpr double kSoftTopKSumTol = 1e-6;
constexpr std::size_t kGradientTrials = 20;
constexpr double kGradientStep = 1e-4;
constexpr double kGradientTol = 1e-3;
constexpr double kRecoveryCosine = 0.99;
constexpr double kRecoverySeconds = 120.0;
constexpr double kMinSpeedup = 8.0;
constexpr double kRasterTol = 1e-6;
constexpr double kClosedFormTol = 1e-7;
constexpr double kEntropyTol = 1e-9;
constexpr double kThreadTol = 1e-5;
constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct Outcome {
  bool pass = false;
  std::string detail;
};

using clock_type = std::chrono::steady_clock;
double since(clock_type::time_point t0) { return std::chrono::duration<double>(clock_type::now() - t0).count(); }

std::string num(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

/// Random K-sparse convex code per region of every view.
std::vector<std::vector<SparseCode>> random_region_codes(const std::vector<SyntheticView>& views, std::size_t atoms,
                                                         std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<std::vector<SparseCode>> out;
  std::vector<std::uint32_t> perm(atoms);
  for (const auto& v : views) {
    std::vector<SparseCode> codes(v.map.region_count);
    for (auto& code : codes) {
      std::iota(perm.begin(), perm.end(), 0u);
      std::shuffle(perm.begin(), perm.end(), rng);
      double sum = 0;
      for (std::size_t j = 0; j < k; ++j) {
        code.entries.push_back({perm[j], u(rng)});
        sum += code.entries.back().coefficient;
      }
      for (auto& e : code.entries) e.coefficient /= sum;
    }
    out.push_back(std::move(codes));
  }
  return out;
}

RowMatrix random_unit_rows(std::size_t rows, std::size_t dim, std::mt19937_64& rng) {
  RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < rows; ++r) m.row(Eigen::Index(r)) = random_unit_vector(dim, rng).transpose();
  return m;
}

/// Per-Gaussian decoded features of a field level: sum_j c_ij C_j.
RowMatrix decode_gaussians(const SparseFieldLevel& level) {
  RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(level.gaussian_count()),
                                  static_cast<Eigen::Index>(level.codebook.dim()));
  for (std::size_t i = 0; i < level.gaussian_count(); ++i)
    for (const auto& e : level.code(i).entries)
      out.row(Eigen::Index(i)) += e.coefficient * level.codebook.basis.row(e.atom);
  return out;
}

// Shared small scene for the two linearity criteria.
struct LinearScene {
  SyntheticBundle bundle;
  std::vector<PixelFragments> views;
  Codebook codebook;
  std::vector<std::vector<SparseCode>> codes;
};

LinearScene make_linear_scene() {
  SynthesisSpec spec;
  spec.gaussians = 200;
  spec.objects = 3;
  spec.views = 4;
  spec.width = spec.height = 64;
  spec.dim = 32;
  LinearScene s;
  s.bundle = synthesize_scene(spec, 17);
  s.views = rasterize_views(s.bundle.scene, s.bundle.cameras);
  std::mt19937_64 rng(23);
  s.codebook.basis = random_unit_rows(16, 32, rng);
  s.codes = random_region_codes(s.bundle.levels[0], 16, 4, rng);
  return s;
}

Outcome linearity() {
  const auto t0 = clock_type::now();
  const auto s = make_linear_scene();
  const std::size_t n = s.bundle.scene.size(), atoms = s.codebook.size();
  std::vector<CodeImage> code_images;
  std::vector<FeatureImage> feature_images;
  for (std::size_t v = 0; v < s.views.size(); ++v) {
    code_images.emplace_back(s.bundle.levels[0][v].map, s.codes[v]);
    feature_images.push_back(decoded_feature_image(s.bundle.levels[0][v].map, s.codes[v], s.codebook));
  }
  // K = L: top-K filtering keeps every non-zero coefficient.
  const auto sparse = uplift_sparse(s.views, code_images, s.codebook, n, atoms);
  const auto dense = uplift_dense(s.views, feature_images, n);
  const RowMatrix decoded = decode_gaussians(sparse);
  double worst = 0;
  std::size_t observed = 0, mismatched_empty = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = Eigen::Index(i);
    if (dense.weight[i] <= 0) {
      mismatched_empty += !sparse.empty_code(i);
      continue;
    }
    ++observed;
    worst = std::max(worst, (decoded.row(r) - dense.features.row(r)).norm() / dense.features.row(r).norm());
  }
  const double secs = since(t0);
  return {worst <= kLinearityTol && mismatched_empty == 0 && observed >= 50 && secs < kLinearitySeconds,
          "max relative error " + num(worst) + " over " + std::to_string(observed) + " observed Gaussians (N=" +
              std::to_string(n) + ", 4 views, 64x64, tol " + num(kLinearityTol) + "), " + num(secs, 3) +
              " s (limit " + num(kLinearitySeconds) + " s)"};
}

Outcome render_equivalence() {
  const auto t0 = clock_type::now();
  const auto s = make_linear_scene();
  const std::size_t n = s.bundle.scene.size();
  std::vector<CodeImage> code_images;
  for (std::size_t v = 0; v < s.views.size(); ++v) code_images.emplace_back(s.bundle.levels[0][v].map, s.codes[v]);
  GaussianSparseField field;
  field.levels.push_back(uplift_sparse(s.views, code_images, s.codebook, n, 4));
  const RowMatrix per_gaussian = decode_gaussians(field.levels[0]);
  double worst = 0;
  for (const auto& frags : s.views) {
    const auto maps = render_coefficients(frags, field);
    const RowMatrix got = decode(maps[0], s.codebook, false);
    const RowMatrix want = blend_payload(frags, per_gaussian);
    for (Eigen::Index p = 0; p < want.rows(); ++p) {
      const double ref = want.row(p).norm();
      const double err = (got.row(p) - want.row(p)).norm();
      worst = std::max(worst, ref > 0 ? err / ref : (err > 0 ? 1.0 : 0.0));
    }
  }
  const double secs = since(t0);
  return {worst <= kRenderTol && secs < kRenderSeconds,
          "max per-pixel relative error " + num(worst) + " (tol " + num(kRenderTol) + "), " + num(secs, 3) +
              " s (limit " + num(kRenderSeconds) + " s)"};
}

Outcome soft_topk_constraints() {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> len(1, 128);
  std::normal_distribution<double> normal(0, 1);
  std::uniform_real_distribution<double> scale(0.01, 60.0);
  std::size_t failures = 0;
  for (std::size_t trial = 0; trial < kSoftTopKTrials; ++trial) {
    const std::size_t atoms = len(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, atoms)(rng);
    Eigen::VectorXd z(static_cast<Eigen::Index>(atoms));
    const double s = scale(rng);
    const bool quantized = trial % 4 == 0;  // force ties
    for (Eigen::Index l = 0; l < z.size(); ++l) z[l] = quantized ? std::round(normal(rng)) : s * normal(rng);
    const Eigen::VectorXd w = soft_topk(z, k);
    const bool ok = (w.array() >= 0).all() && std::abs(w.sum() - 1.0) <= kSoftTopKSumTol &&
                    std::size_t((w.array() != 0).count()) <= k && w.allFinite();
    failures += !ok;
  }
  return {failures == 0, std::to_string(kSoftTopKTrials) + " random evaluations, " + std::to_string(failures) +
                             " violations (sum tol " + num(kSoftTopKSumTol) + ")"};
}

Outcome gradient_check() {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> normal(0, 1);
  const std::size_t k = 2;
  double worst_z = 0, worst_c = 0;
  std::size_t off_support_nonzero = 0;
  for (std::size_t trial = 0; trial < kGradientTrials; ++trial) {
    const RowMatrix f = random_unit_rows(5, 16, rng);
    RowMatrix c(8, 16), z(5, 8);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = normal(rng);
    // Logits with a gap at rank K so finite steps never change the support.
    for (Eigen::Index r = 0; r < z.rows(); ++r)
      for (;;) {
        for (Eigen::Index l = 0; l < z.cols(); ++l) z(r, l) = 2.0 * normal(rng);
        std::vector<double> v(z.row(r).data(), z.row(r).data() + z.cols());
        std::sort(v.rbegin(), v.rend());
        if (v[k - 1] - v[k] >= 1e-2) break;
      }
    RowMatrix gz, gc;
    cosine_loss(f, z, c, k, &gz, &gc);
    const RowMatrix nz = t::numeric_gradient(z, [&](const RowMatrix& zz) { return cosine_loss(f, zz, c, k); }, kGradientStep);
    const RowMatrix nc = t::numeric_gradient(c, [&](const RowMatrix& cc) { return cosine_loss(f, z, cc, k); }, kGradientStep);
    worst_z = std::max(worst_z, (gz - nz).norm() / nz.norm());
    worst_c = std::max(worst_c, (gc - nc).norm() / nc.norm());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      const auto support = topk_indices(z.row(r).transpose(), k);
      for (Eigen::Index l = 0; l < z.cols(); ++l)
        if (std::find(support.begin(), support.end(), std::uint32_t(l)) == support.end() && gz(r, l) != 0.0)
          ++off_support_nonzero;
    }
  }
  return {worst_z <= kGradientTol && worst_c <= kGradientTol && off_support_nonzero == 0,
          std::to_string(kGradientTrials) + " instances (R=5 L=8 D=16 K=2), worst relative error logits " +
              num(worst_z) + ", codebook " + num(worst_c) + " (tol " + num(kGradientTol) + "), " +
              std::to_string(off_support_nonzero) + " non-zero off-support entries"};
}

Outcome recovery() {
  const auto data = t::make_sparse_mixture(64, 128, 500, 4, 0.01, 51);
  SparseCodingConfig cfg;  // L=64, K=4, 4000 epochs, lr 7e-4
  cfg.seed = 51;
  const auto t0 = clock_type::now();
  const auto result = train(data.features, cfg);
  const double secs = since(t0);
  return {result.mean_cosine >= kRecoveryCosine && secs < kRecoverySeconds,
          "mean cosine " + num(result.mean_cosine) + " (need " + num(kRecoveryCosine) + "; generator ceiling " +
              num(data.oracle_cosine) + "), " + std::to_string(cfg.epochs) + " epochs in " + num(secs, 3) +
              " s (limit " + num(kRecoverySeconds) + " s)"};
}

// Noisy 5-object scene shared by the denoising and entropy criteria.
struct NoisyRun {
  double filtered = 0, unfiltered = 0, minus_lowest = 0, minus_highest = 0;
};

NoisyRun noisy_scene(std::uint64_t seed) {
  SynthesisSpec spec;
  spec.objects = 5;
  spec.views = 12;
  spec.gaussians = 500;
  spec.levels = 3;
  spec.noise_rate = 0.2;
  const auto b = synthesize_scene(spec, seed);
  const auto views = rasterize_views(b.scene, b.cameras);
  const auto gt = bundle_ground_truth(b);
  const SparseCodingConfig coding;  // L=64, K=4
  GaussianSparseField filtered, unfiltered;
  for (std::size_t l = 0; l < spec.levels; ++l) {
    const auto set = bundle_regions(b, l);
    const auto trained = encode_level(set, level_coding(coding, seed, l));
    filtered.levels.push_back(uplift_level(views, set, trained, b.scene.size(), coding.sparsity, 1));
    unfiltered.levels.push_back(uplift_level(views, set, trained, b.scene.size(), coding.atoms, 1));
  }
  const QueryParams params;
  NoisyRun r;
  r.filtered = evaluate_field(views, filtered, b.queries, gt, params).mean_iou();
  r.unfiltered = evaluate_field(views, unfiltered, b.queries, gt, params).mean_iou();
  r.minus_lowest = evaluate_field(views, entropy_filter(filtered, 0.5, EntropyMode::Lowest), b.queries, gt, params).mean_iou();
  r.minus_highest = evaluate_field(views, entropy_filter(filtered, 0.5, EntropyMode::Highest), b.queries, gt, params).mean_iou();
  return r;
}

const std::vector<NoisyRun>& noisy_runs() {
  static const std::vector<NoisyRun> runs = [] {
    std::vector<NoisyRun> out;
    for (auto seed : kSeeds) out.push_back(noisy_scene(seed));
    return out;
  }();
  return runs;
}

Outcome voting_denoising() {
  double f = 0, u = 0;
  std::size_t wins = 0;
  std::string per_seed;
  for (const auto& r : noisy_runs()) {
    f += r.filtered;
    u += r.unfiltered;
    wins += r.filtered >= r.unfiltered;
    per_seed += " " + num(r.filtered, 3) + "/" + num(r.unfiltered, 3);
  }
  f /= double(noisy_runs().size());
  u /= double(noisy_runs().size());
  return {f >= u, "mean mIoU over 5 seeds: top-K " + num(f) + " vs K=L " + num(u) + " (per seed K/L:" + per_seed +
                      "; top-K >= K=L on " + std::to_string(wins) + "/5)"};
}

Outcome entropy_directionality() {
  double lo = 0, hi = 0;
  std::size_t holds = 0;
  for (const auto& r : noisy_runs()) {
    lo += r.minus_lowest;
    hi += r.minus_highest;
    holds += r.minus_lowest <= r.minus_highest;
  }
  lo /= double(noisy_runs().size());
  hi /= double(noisy_runs().size());
  double base = 0;
  for (const auto& r : noisy_runs()) base += r.filtered / double(noisy_runs().size());
  return {lo <= hi, "mean mIoU over 5 seeds: unfiltered " + num(base) + ", minus 50% lowest " + num(lo) +
                        ", minus 50% highest " + num(hi) + " (holds on " + std::to_string(holds) + "/5 seeds)"};
}

Outcome speedup() {
  SynthesisSpec spec;
  spec.gaussians = 100000;
  spec.objects = 5;
  spec.views = 20;
  spec.width = spec.height = 256;
  const auto geo = synthesize_geometry(spec, 61);
  const auto t0 = clock_type::now();
  const auto r = bench_uplift(geo.scene, geo.cameras, 512, 4, 64, 5, 1, 61);  // throws if paths disagree
  return {r.speedup >= kMinSpeedup && r.max_relative_error <= kLinearityTol,
          "N=100000, 20 views 256x256, D=512 K=4 L=64, 1 thread, median of 5: dense " + num(r.dense_seconds) +
              " s, sparse " + num(r.sparse_seconds) + " s, speedup " + num(r.speedup, 3) + "x (need " +
              num(kMinSpeedup) + "x), path agreement " + num(r.max_relative_error) + ", " +
              std::to_string(r.fragments) + " fragments, " + num(since(t0), 3) + " s total"};
}

Outcome storage_bound() {
  const std::size_t n = 10000, dim = 512, atoms = 64, k = 4;
  std::mt19937_64 rng(71);
  Codebook cb;
  cb.basis = random_unit_rows(atoms, dim, rng);
  SparseFieldLevel level(cb, n, k);
  std::uniform_int_distribution<std::uint32_t> pick(0, atoms - 1);
  for (std::size_t i = 0; i < n; ++i) {
    SparseCode c;
    if (i % 7 != 0)  // some Gaussians stay empty; their slots still occupy the payload
      for (std::uint32_t j = 0; j < k; ++j) c.entries.push_back({(pick(rng) + j * 16) % std::uint32_t(atoms), 0.25});
    level.set_code(i, c);
  }
  GaussianSparseField field;
  field.levels.push_back(level);
  t::TempDir tmp("acceptance_storage");
  const auto path = tmp.file("field.scup");
  save_sparse_field(field, path);
  const std::size_t file = fs::file_size(path);
  const std::size_t payload = n * k * 8, codebook = atoms * dim * 4, dense = n * dim * 4;
  const std::size_t expected = 12 + 16 + codebook + payload;
  const bool ratio_ok = dense == 64 * payload;
  return {file == expected && level.storage_bytes() == 16 + codebook + payload && ratio_ok,
          "file " + std::to_string(file) + " B = 12 header + 16 level header + " + std::to_string(codebook) +
              " codebook + " + std::to_string(payload) + " payload (N*K*8); dense N*D*4 = " + std::to_string(dense) +
              " B = " + std::to_string(dense / payload) + "x payload"};
}

Outcome rasterizer_suite() {
  double worst_e = 0, worst_t = 0, max_sum = 0;
  std::size_t id_mismatch = 0, count_mismatch = 0, fragments = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    GaussianScene scene(t::random_gaussians(50, rng));
    Camera cam;
    cam.fx = cam.fy = 30;
    cam.cx = cam.cy = 16;
    cam.width = cam.height = 32;
    const auto frags = rasterize_fragments(scene, cam);
    std::vector<double> oracle_t;
    const auto oracle = t::brute_force(scene, cam, &oracle_t);
    for (std::size_t p = 0; p < cam.pixel_count(); ++p) {
      const auto got = frags.pixel(p);
      double sum = 0;
      for (const auto& f : got) sum += f.blend_weight;
      max_sum = std::max(max_sum, sum);
      worst_t = std::max({worst_t, std::abs(1.0 - sum - frags.transmittance(p)), std::abs(frags.transmittance(p) - oracle_t[p])});
      if (got.size() != oracle[p].size()) {
        ++count_mismatch;
        continue;
      }
      for (std::size_t j = 0; j < got.size(); ++j) {
        id_mismatch += got[j].gaussian_id != oracle[p][j].id;
        worst_e = std::max(worst_e, std::abs(got[j].blend_weight - oracle[p][j].e));
      }
      fragments += got.size();
    }
  }
  return {max_sum <= 1.0 + kRasterTol && worst_t <= kRasterTol && worst_e <= kRasterTol && id_mismatch == 0 &&
              count_mismatch == 0,
          "10 scenes of 50 Gaussians at 32x32, " + std::to_string(fragments) + " fragments: max sum e " +
              num(max_sum, 8) + ", transmittance error " + num(worst_t) + ", weight error vs brute force " +
              num(worst_e) + " (tol " + num(kRasterTol) + "), " + std::to_string(count_mismatch + id_mismatch) +
              " list mismatches"};
}

Outcome closed_forms() {
  const Eigen::Index d = 8;
  auto axis = [&](Eigen::Index i) { return Eigen::VectorXd::Unit(d, i); };
  CanonicalSet canon;
  for (int c = 0; c < 4; ++c) canon.vectors[std::size_t(c)] = axis(4 + c);
  const Eigen::RowVectorXd f0 = axis(0).transpose();
  const double equal = relevancy_score(f0, axis(1), canon, 10.0);        // every logit 0
  const double high = relevancy_score(f0, axis(0), canon, 10.0);         // 10 vs 0
  const double low = relevancy_score(axis(4).transpose(), axis(0), canon, 10.0);  // 0 vs 10
  const double h_onehot = entropy(SparseCode{{{3, 1.0}}});
  const double h_uniform = entropy(SparseCode{{{0, 0.25}, {1, 0.25}, {2, 0.25}, {3, 0.25}}});
  const double want_high = 1.0 / (1.0 + std::exp(-10.0)), want_low = 1.0 / (1.0 + std::exp(10.0));
  const bool ok = std::abs(equal - 0.5) <= kClosedFormTol && std::abs(high - want_high) <= kClosedFormTol &&
                  std::abs(high - 0.9999546) <= 1e-7 && std::abs(low - want_low) <= kClosedFormTol &&
                  std::abs(low - 4.54e-5) <= 1e-7 && std::abs(h_onehot) <= kEntropyTol &&
                  std::abs(h_uniform - std::log(4.0)) <= kEntropyTol;
  return {ok, "R(equal) " + num(equal, 10) + ", R(+10) " + num(high, 10) + ", R(-10) " + num(low, 10) +
                  ", H(one-hot) " + num(h_onehot, 10) + ", H(uniform 4) " + num(h_uniform, 12) + " vs ln 4 " +
                  num(std::log(4.0), 12)};
}

int run_cli(const std::string& args, const std::string& log) {
  const std::string cmd = std::string(SCOUP_CLI_PATH) + " " + args + " >> " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  t::TempDir tmp("acceptance_det");
  const std::string log = tmp.file("cli.log");
  auto pipeline = [&](const std::string& ws, int threads) {
    const std::string common = " --out " + ws + " --seed 7 --threads " + std::to_string(threads);
    for (const char* step :
         {"synth --noise 0.2", "encode", "uplift", "query --view 2 --label object_1", "query --all"})
      if (run_cli(step + common, log) != 0) return false;
    return true;
  };
  auto snapshot = [](const std::string& ws) {
    std::map<std::string, std::string> files;
    for (const auto& [rel, size] : list_files(ws)) files[rel] = t::read_bytes((fs::path(ws) / rel).string());
    return files;
  };
  const std::string ws = tmp.file("ws");
  if (!pipeline(ws, 1)) return {false, "CLI run failed, see " + log};
  const auto first = snapshot(ws);
  fs::remove_all(ws);
  if (!pipeline(ws, 1)) return {false, "CLI rerun failed"};
  const auto second = snapshot(ws);
  std::size_t differing = 0;
  for (const auto& [name, bytes] : first) differing += !second.count(name) || second.at(name) != bytes;
  differing += second.size() != first.size();

  const std::string ws4 = tmp.file("ws4");
  if (!pipeline(ws4, 4)) return {false, "4-thread CLI run failed"};
  const auto a = load_sparse_field(ws + "/field.scup"), b = load_sparse_field(ws4 + "/field.scup");
  double worst = 0;
  std::size_t atom_mismatch = 0;
  for (std::size_t l = 0; l < a.levels.size(); ++l) {
    atom_mismatch += a.levels[l].atoms != b.levels[l].atoms;
    for (std::size_t s = 0; s < a.levels[l].coefficients.size(); ++s) {
      const double x = a.levels[l].coefficients[s], y = b.levels[l].coefficients[s];
      worst = std::max(worst, std::abs(x - y) / std::max(std::abs(x), 1e-30) * (x != y));
    }
  }
  const auto ma = nlohmann::json::parse(t::read_bytes(ws + "/results/metrics.json"));
  const auto mb = nlohmann::json::parse(t::read_bytes(ws4 + "/results/metrics.json"));
  const double miou_gap = std::abs(ma["mIoU"].get<double>() - mb["mIoU"].get<double>());
  return {differing == 0 && atom_mismatch == 0 && worst <= kThreadTol && miou_gap <= kThreadTol * std::max(1.0, ma["mIoU"].get<double>()),
          std::to_string(first.size()) + " files from synth/encode/uplift/query, " + std::to_string(differing) +
              " differ across 1-thread reruns; 4 threads vs 1: max coefficient relative gap " + num(worst) +
              ", atom-slot mismatches " + std::to_string(atom_mismatch) + ", mIoU gap " + num(miou_gap) +
              " (tol " + num(kThreadTol) + ")"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"linearity-equivalence", linearity},
      {"render-equivalence", render_equivalence},
      {"soft-topk-constraints", soft_topk_constraints},
      {"gradient-check", gradient_check},
      {"sparse-coding-recovery", recovery},
      {"voting-denoising", voting_denoising},
      {"uplift-speedup", speedup},
      {"storage-bound", storage_bound},
      {"rasterizer-suite", rasterizer_suite},
      {"relevancy-entropy-closed-forms", closed_forms},
      {"entropy-filter-directionality", entropy_directionality},
      {"determinism", determinism},
  };
  std::size_t passed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    passed += o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << "acceptance: " << passed << "/" << criteria.size() << " passed" << std::endl;
  return passed == criteria.size() ? 0 : 1;
}
