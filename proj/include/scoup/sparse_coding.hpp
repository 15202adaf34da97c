#pragma once

#include "scoup/common.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace scoup {

/// Per-view map from pixel to region index (or kUnassigned), row-major.
struct RegionMap {
  int width = 0;
  int height = 0;
  std::uint32_t region_count = 0;
  std::vector<std::uint32_t> ids;

  std::size_t pixel_count() const { return std::size_t(width) * std::size_t(height); }
  bool operator==(const RegionMap&) const = default;
};

/// All region features of one semantic level. Every (view, region) pair is
/// its own row; maps carry row indices into `features`.
struct RegionFeatureSet {
  int level = 0;
  RowMatrix features;            // R x D, unit rows
  std::vector<RegionMap> maps;   // ids are global rows
  std::vector<std::size_t> areas;

  std::size_t region_count() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
};

/// Stacks per-view region maps (local ids) and per-view feature tables into
/// one set, offsetting ids so they index the stacked rows.
inline RegionFeatureSet assemble_regions(int level, const std::vector<RegionMap>& local_maps,
                                         const std::vector<RowMatrix>& local_features) {
  if (local_maps.size() != local_features.size()) throw DataError("region map / feature file count mismatch");
  RegionFeatureSet set;
  set.level = level;
  Eigen::Index rows = 0, dim = -1;
  for (std::size_t v = 0; v < local_maps.size(); ++v) {
    if (local_features[v].rows() != static_cast<Eigen::Index>(local_maps[v].region_count))
      throw DataError("view " + std::to_string(v) + ": region count " + std::to_string(local_maps[v].region_count) +
                      " but " + std::to_string(local_features[v].rows()) + " feature rows");
    // Empty tables still carry D, so a level without regions keeps its width.
    if (local_features[v].rows() > 0 || local_features[v].cols() > 0) {
      if (dim >= 0 && local_features[v].cols() != dim) throw DataError("feature dimension differs across views");
      dim = local_features[v].cols();
    }
    rows += local_features[v].rows();
  }
  set.features.resize(rows, std::max<Eigen::Index>(dim, 0));
  set.areas.assign(static_cast<std::size_t>(rows), 0);
  Eigen::Index offset = 0;
  for (std::size_t v = 0; v < local_maps.size(); ++v) {
    const auto& local = local_maps[v];
    if (local.ids.size() != local.pixel_count()) throw DataError("view " + std::to_string(v) + ": map size mismatch");
    if (local_features[v].rows() > 0) set.features.middleRows(offset, local_features[v].rows()) = local_features[v];
    RegionMap global = local;
    global.region_count = static_cast<std::uint32_t>(rows);
    for (auto& id : global.ids) {
      if (id == kUnassigned) continue;
      if (id >= local.region_count)
        throw DataError("view " + std::to_string(v) + ": region id " + std::to_string(id) + " out of range");
      id += static_cast<std::uint32_t>(offset);
      ++set.areas[id];
    }
    set.maps.push_back(std::move(global));
    offset += local_features[v].rows();
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double n = set.features.row(r).norm();
    if (std::abs(n - 1.0) > 1e-4)
      throw DataError("region feature " + std::to_string(r) + " is not unit norm (" + std::to_string(n) + ")");
  }
  return set;
}

struct Codebook {
  RowMatrix basis;  // L x D

  std::size_t size() const { return static_cast<std::size_t>(basis.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(basis.cols()); }
};

struct CodeEntry {
  std::uint32_t atom;
  double coefficient;

  bool operator==(const CodeEntry&) const = default;
};

/// At most K (atom, coefficient) pairs forming a convex combination. Empty
/// means "no code".
struct SparseCode {
  std::vector<CodeEntry> entries;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }

  Eigen::VectorXd densify(std::size_t atoms) const {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(atoms));
    for (const auto& e : entries) w[e.atom] += e.coefficient;
    return w;
  }
};

/// Checks the convex-combination constraints. Returns an empty string when
/// valid, otherwise a description of the first violation.
inline std::string check_code(const SparseCode& code, std::size_t atoms, std::size_t k, double tol = 1e-6) {
  if (code.empty()) return {};
  if (code.size() > k) return "more than K entries";
  double sum = 0.0;
  std::vector<bool> seen(atoms, false);
  for (const auto& e : code.entries) {
    if (e.atom >= atoms) return "atom index out of range";
    if (seen[e.atom]) return "duplicate atom index";
    seen[e.atom] = true;
    if (!(e.coefficient > 0.0)) return "non-positive coefficient";
    sum += e.coefficient;
  }
  if (std::abs(sum - 1.0) > tol) return "coefficients do not sum to one";
  return {};
}

struct SparseCodingConfig {
  std::size_t atoms = 64;      // L
  std::size_t sparsity = 4;    // K
  std::size_t epochs = 4000;
  double learning_rate = 7e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::size_t kmeans_max_iterations = 100;
  double logit_init_scale = 10.0;

  void validate() const {
    if (sparsity < 1 || sparsity > atoms) throw ConfigError("sparse coding needs 1 <= K <= L");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
  }
};

// ---------------------------------------------------------------------------
// k-means initialization

inline Eigen::VectorXd random_unit_vector(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  do {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  } while (v.norm() == 0.0);
  return v.normalized();
}

/// Index of the nearest center, ties toward the lower index.
inline std::size_t nearest_center(const RowMatrix& centers, std::size_t used, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                  double* dist2 = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < used; ++c) {
    const double d = (centers.row(static_cast<Eigen::Index>(c)) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist2) *dist2 = best_d;
  return best;
}

/// k-means++ seeding followed by Lloyd iterations. Atoms that cannot be
/// seeded from data (R < L, or all remaining points already covered) are
/// unit-norm random vectors.
inline Codebook kmeans_init(const RowMatrix& points, std::size_t atoms, std::uint64_t seed,
                            std::size_t max_iterations = 100) {
  if (points.rows() < 1) throw DataError("k-means needs at least one feature row");
  const std::size_t n = static_cast<std::size_t>(points.rows());
  const std::size_t dim = static_cast<std::size_t>(points.cols());
  std::mt19937_64 rng(seed);

  RowMatrix centers(static_cast<Eigen::Index>(atoms), static_cast<Eigen::Index>(dim));
  std::size_t seeded = 0;

  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  centers.row(0) = points.row(static_cast<Eigen::Index>(pick(rng)));
  seeded = 1;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = (points.row(Eigen::Index(i)) - centers.row(0)).squaredNorm();
  while (seeded < atoms) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    if (!(total > 0.0)) break;
    std::uniform_real_distribution<double> u(0.0, total);
    const double target = u(rng);
    double run = 0.0;
    std::size_t chosen = n;
    for (std::size_t i = 0; i < n; ++i) {
      run += d2[i];
      if (d2[i] > 0.0 && run > target) {
        chosen = i;
        break;
      }
    }
    if (chosen == n) {  // rounding at the tail: last point with positive weight
      for (std::size_t i = n; i-- > 0;)
        if (d2[i] > 0.0) {
          chosen = i;
          break;
        }
    }
    centers.row(Eigen::Index(seeded)) = points.row(Eigen::Index(chosen));
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (points.row(Eigen::Index(i)) - centers.row(Eigen::Index(seeded))).squaredNorm());
    ++seeded;
  }
  for (std::size_t c = seeded; c < atoms; ++c) centers.row(Eigen::Index(c)) = random_unit_vector(dim, rng).transpose();

  // Lloyd iterations over the seeded centers; random surplus atoms also
  // compete for points but keep their value when nothing is assigned.
  std::vector<std::size_t> assign(n, atoms);
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest_center(centers, atoms, points.row(Eigen::Index(i)));
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    if (!changed) break;
    RowMatrix sums = RowMatrix::Zero(centers.rows(), centers.cols());
    std::vector<std::size_t> counts(atoms, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(Eigen::Index(assign[i])) += points.row(Eigen::Index(i));
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < atoms; ++c)
      if (counts[c] > 0) centers.row(Eigen::Index(c)) = sums.row(Eigen::Index(c)) / double(counts[c]);
  }
  return Codebook{std::move(centers)};
}

/// Within-cluster sum of squared distances to the nearest atom.
inline double within_cluster_ss(const RowMatrix& points, const RowMatrix& centers) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double d = 0.0;
    nearest_center(centers, static_cast<std::size_t>(centers.rows()), points.row(i), &d);
    total += d;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Soft top-K

/// Indices of the K largest values, ties toward the lower index, returned in
/// rank order.
inline std::vector<std::uint32_t> topk_indices(const Eigen::Ref<const Eigen::VectorXd>& values, std::size_t k) {
  std::vector<std::uint32_t> idx(static_cast<std::size_t>(values.size()));
  std::iota(idx.begin(), idx.end(), 0u);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::uint32_t a, std::uint32_t b) { return values[a] > values[b] || (values[a] == values[b] && a < b); });
  idx.resize(k);
  return idx;
}

/// softmax -> keep the K largest -> renormalize. The renormalized weights
/// equal a softmax restricted to the kept logits, which is how they are
/// evaluated (no underflow of kept entries).
struct SoftTopK {
  std::vector<std::uint32_t> support;
  std::vector<double> weights;  // aligned with support
};

inline SoftTopK soft_topk_support(const Eigen::Ref<const Eigen::VectorXd>& logits, std::size_t k) {
  SoftTopK out;
  out.support = topk_indices(logits, k);
  if (out.support.empty()) return out;
  const double peak = logits[out.support.front()];
  out.weights.resize(out.support.size());
  double sum = 0.0;
  for (std::size_t s = 0; s < out.support.size(); ++s) sum += out.weights[s] = std::exp(logits[out.support[s]] - peak);
  for (auto& w : out.weights) w /= sum;
  return out;
}

inline Eigen::VectorXd soft_topk(const Eigen::Ref<const Eigen::VectorXd>& logits, std::size_t k) {
  const auto s = soft_topk_support(logits, k);
  Eigen::VectorXd dense = Eigen::VectorXd::Zero(logits.size());
  for (std::size_t i = 0; i < s.support.size(); ++i) dense[s.support[i]] = s.weights[i];
  return dense;
}

/// Drops zero weights and returns the remaining (atom, coefficient) pairs in
/// ascending atom order.
inline SparseCode to_sparse_code(const Eigen::Ref<const Eigen::VectorXd>& dense) {
  SparseCode code;
  for (Eigen::Index l = 0; l < dense.size(); ++l)
    if (dense[l] > 0.0) code.entries.push_back({static_cast<std::uint32_t>(l), dense[l]});
  return code;
}

// ---------------------------------------------------------------------------
// Cosine reconstruction loss

/// loss = (1/R) * sum_r (1 - cos(w_r C, f_r)), w_r = soft_topk(z_r, K).
/// When grad pointers are given they receive dloss/dlogits (non-zero only on
/// each row's retained support) and dloss/dcodebook.
inline double cosine_loss(const RowMatrix& features, const RowMatrix& logits, const RowMatrix& codebook, std::size_t k,
                          RowMatrix* grad_logits = nullptr, RowMatrix* grad_codebook = nullptr) {
  const Eigen::Index rows = features.rows();
  if (grad_logits) grad_logits->setZero(logits.rows(), logits.cols());
  if (grad_codebook) grad_codebook->setZero(codebook.rows(), codebook.cols());
  if (rows == 0) return 0.0;
  const double inv_r = 1.0 / double(rows);
  const bool want_grad = grad_logits || grad_codebook;

  double loss = 0.0;
  Eigen::RowVectorXd x(codebook.cols()), gx(codebook.cols());
  std::vector<double> gw;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto sel = soft_topk_support(logits.row(r).transpose(), k);
    x.setZero();
    for (std::size_t s = 0; s < sel.support.size(); ++s) x.noalias() += sel.weights[s] * codebook.row(sel.support[s]);
    const auto f = features.row(r);
    const double xn = x.norm(), fn = f.norm();
    if (xn == 0.0 || fn == 0.0) {
      loss += inv_r;
      continue;
    }
    const double cos = x.dot(f) / (xn * fn);
    loss += inv_r * (1.0 - cos);
    if (!want_grad) continue;

    gx = -inv_r * (f / (xn * fn) - cos * x / (xn * xn));
    gw.assign(sel.support.size(), 0.0);
    double mean = 0.0;
    for (std::size_t s = 0; s < sel.support.size(); ++s) {
      const auto atom = sel.support[s];
      if (grad_codebook) grad_codebook->row(atom).noalias() += sel.weights[s] * gx;
      gw[s] = gx.dot(codebook.row(atom));
      mean += sel.weights[s] * gw[s];
    }
    if (grad_logits)
      for (std::size_t s = 0; s < sel.support.size(); ++s)
        (*grad_logits)(r, sel.support[s]) = sel.weights[s] * (gw[s] - mean);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  Codebook codebook;
  std::vector<SparseCode> codes;  // one per region row
  std::vector<double> loss_history;
  double mean_cosine = 0.0;
};

namespace detail {

class Adam {
 public:
  Adam(Eigen::Index rows, Eigen::Index cols, const SparseCodingConfig& cfg)
      : m_(RowMatrix::Zero(rows, cols)), v_(RowMatrix::Zero(rows, cols)), cfg_(cfg) {}

  void step(RowMatrix& param, const RowMatrix& grad) {
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    param.array() -= cfg_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.epsilon);
  }

 private:
  RowMatrix m_, v_;
  const SparseCodingConfig& cfg_;
  long t_ = 0;
};

}  // namespace detail

/// Initial logits: scale * cos(f_r, C_l).
inline RowMatrix initial_logits(const RowMatrix& features, const RowMatrix& codebook, double scale) {
  RowMatrix logits = features * codebook.transpose();
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double fn = features.row(r).norm();
    for (Eigen::Index l = 0; l < logits.cols(); ++l) {
      const double cn = codebook.row(l).norm();
      logits(r, l) = (fn > 0 && cn > 0) ? scale * logits(r, l) / (fn * cn) : 0.0;
    }
  }
  return logits;
}

/// Mean cosine similarity between features and their code reconstructions.
inline double mean_cosine(const RowMatrix& features, const std::vector<SparseCode>& codes, const RowMatrix& codebook) {
  if (features.rows() == 0) return 1.0;
  double total = 0.0;
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(codebook.cols());
    for (const auto& e : codes[static_cast<std::size_t>(r)].entries) x += e.coefficient * codebook.row(e.atom);
    const double denom = x.norm() * features.row(r).norm();
    total += denom > 0 ? x.dot(features.row(r)) / denom : 0.0;
  }
  return total / double(features.rows());
}

/// Full-batch Adam on the cosine loss, jointly over logits and codebook.
inline TrainResult train(const RowMatrix& features, const SparseCodingConfig& cfg) {
  cfg.validate();
  if (features.rows() < 1) throw DataError("sparse coding needs at least one region");

  TrainResult out;
  RowMatrix codebook = kmeans_init(features, cfg.atoms, cfg.seed, cfg.kmeans_max_iterations).basis;
  RowMatrix logits = initial_logits(features, codebook, cfg.logit_init_scale);

  detail::Adam adam_logits(logits.rows(), logits.cols(), cfg);
  detail::Adam adam_codebook(codebook.rows(), codebook.cols(), cfg);
  RowMatrix g_logits, g_codebook;
  out.loss_history.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double loss = cosine_loss(features, logits, codebook, cfg.sparsity, &g_logits, &g_codebook);
    if (!std::isfinite(loss)) throw DataError("non-finite loss at epoch " + std::to_string(epoch));
    out.loss_history.push_back(loss);
    adam_logits.step(logits, g_logits);
    adam_codebook.step(codebook, g_codebook);
  }

  out.codes.reserve(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index r = 0; r < features.rows(); ++r)
    out.codes.push_back(to_sparse_code(soft_topk(logits.row(r).transpose(), cfg.sparsity)));
  out.codebook.basis = std::move(codebook);
  out.mean_cosine = mean_cosine(features, out.codes, out.codebook.basis);
  return out;
}

inline TrainResult train(const RegionFeatureSet& set, const SparseCodingConfig& cfg) {
  return train(set.features, cfg);
}

// ---------------------------------------------------------------------------
// Pixel lookup

/// Region map composed with per-region codes: the per-pixel W_v(p).
class CodeImage {
 public:
  CodeImage(const RegionMap& map, const std::vector<SparseCode>& codes) : width_(map.width), height_(map.height) {
    pixel_code_.resize(map.pixel_count(), kUnassigned);
    for (std::size_t p = 0; p < map.ids.size(); ++p) {
      const auto id = map.ids[p];
      if (id == kUnassigned) continue;
      if (id >= codes.size()) throw DataError("region " + std::to_string(id) + " has no code");
      pixel_code_[p] = id;
    }
    codes_ = &codes;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return pixel_code_.size(); }

  /// Empty span for unassigned pixels.
  std::span<const CodeEntry> at(std::size_t p) const {
    const auto id = pixel_code_[p];
    if (id == kUnassigned) return {};
    return (*codes_)[id].entries;
  }
  std::uint32_t region(std::size_t p) const { return pixel_code_[p]; }
  const std::vector<SparseCode>& codes() const { return *codes_; }

 private:
  int width_, height_;
  std::vector<std::uint32_t> pixel_code_;
  const std::vector<SparseCode>* codes_ = nullptr;
};

/// One CodeImage per view. `codes` must outlive the result.
inline std::vector<CodeImage> encode_region_codes(const RegionFeatureSet& set, const std::vector<SparseCode>& codes) {
  std::vector<CodeImage> images;
  images.reserve(set.maps.size());
  for (const auto& m : set.maps) images.emplace_back(m, codes);
  return images;
}

}  // namespace scoup
