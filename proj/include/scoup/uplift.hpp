#pragma once

#include "scoup/common.hpp"
#include "scoup/rasterizer.hpp"
#include "scoup/sparse_coding.hpp"

#include <memory>
#include <span>

namespace scoup {

/// Keeps the K largest entries of a non-negative vector (ties toward the
/// lower index) and L1-normalizes them. Zero input gives an empty code.
/// Entries come back in rank order.
inline SparseCode topk_normalize(const Eigen::Ref<const Eigen::VectorXd>& w, std::size_t k) {
  SparseCode code;
  double mass = 0.0;
  for (auto idx : topk_indices(w, k)) {
    if (!(w[idx] > 0.0)) break;
    code.entries.push_back({idx, w[idx]});
    mass += w[idx];
  }
  for (auto& e : code.entries) e.coefficient /= mass;
  return code;
}

/// Dense per-Gaussian accumulated coefficient mass w_i (N x L).
struct CoefficientAccumulator {
  RowMatrix mass;

  std::size_t gaussian_count() const { return static_cast<std::size_t>(mass.rows()); }
  std::size_t atoms() const { return static_cast<std::size_t>(mass.cols()); }
};

struct UpliftStats {
  std::uint64_t fragments = 0;       // fragments visited on pixels with a code
  std::uint64_t atom_updates = 0;    // accumulator entries touched
  std::uint64_t max_updates_per_fragment = 0;
};

/// One level of the per-Gaussian sparse field, laid out as in the .scup file:
/// K slots per Gaussian, kUnassigned marks an unused slot.
struct SparseFieldLevel {
  Codebook codebook;
  std::size_t k = 0;
  std::vector<std::uint32_t> atoms;
  std::vector<float> coefficients;

  std::size_t gaussian_count() const { return k == 0 ? 0 : atoms.size() / k; }

  SparseFieldLevel() = default;
  SparseFieldLevel(Codebook cb, std::size_t n, std::size_t k_)
      : codebook(std::move(cb)), k(k_), atoms(n * k_, kUnassigned), coefficients(n * k_, 0.f) {}

  std::span<const std::uint32_t> atom_slots(std::size_t i) const { return {atoms.data() + i * k, k}; }
  std::span<const float> coefficient_slots(std::size_t i) const { return {coefficients.data() + i * k, k}; }

  bool empty_code(std::size_t i) const { return atoms[i * k] == kUnassigned; }

  SparseCode code(std::size_t i) const {
    SparseCode c;
    for (std::size_t s = 0; s < k; ++s)
      if (atoms[i * k + s] != kUnassigned) c.entries.push_back({atoms[i * k + s], double(coefficients[i * k + s])});
    return c;
  }

  void set_code(std::size_t i, const SparseCode& c) {
    if (c.size() > k) throw DataError("code for Gaussian " + std::to_string(i) + " exceeds K");
    for (std::size_t s = 0; s < k; ++s) {
      atoms[i * k + s] = s < c.size() ? c.entries[s].atom : kUnassigned;
      coefficients[i * k + s] = s < c.size() ? static_cast<float>(c.entries[s].coefficient) : 0.f;
    }
  }

  void clear_code(std::size_t i) { set_code(i, SparseCode{}); }

  /// Serialized size of this level inside a .scup file.
  std::size_t storage_bytes() const {
    return 4 * sizeof(std::uint32_t) + codebook.size() * codebook.dim() * sizeof(float) +
           gaussian_count() * k * (sizeof(std::uint32_t) + sizeof(float));
  }
};

struct GaussianSparseField {
  std::vector<SparseFieldLevel> levels;

  std::size_t gaussian_count() const { return levels.empty() ? 0 : levels.front().gaussian_count(); }
};

/// Rasterizes every view once. Fragment lists are shared by all uplift and
/// render paths so e_i(v,p) is identical everywhere.
inline std::vector<PixelFragments> rasterize_views(const GaussianScene& scene, const std::vector<Camera>& cameras,
                                                   int threads = 1) {
  std::vector<PixelFragments> out;
  out.reserve(cameras.size());
  for (const auto& cam : cameras) out.push_back(rasterize_fragments(scene, cam, threads));
  return out;
}

/// Sparse accumulation: w_i[j] += c_j * e for each fragment and each code
/// entry of the fragment's pixel. Views are split across workers, each with
/// its own accumulator replica; replicas are summed in worker order.
inline CoefficientAccumulator accumulate_sparse(std::span<const PixelFragments> views, std::span<const CodeImage> codes,
                                                std::size_t gaussians, std::size_t atoms, int threads = 1,
                                                UpliftStats* stats = nullptr) {
  if (views.size() != codes.size()) throw DataError("view count differs between fragments and code images");
  for (std::size_t v = 0; v < views.size(); ++v)
    if (views[v].pixel_count() != codes[v].pixel_count())
      throw DataError("view " + std::to_string(v) + ": code image size does not match camera");
  for (const auto& image : codes)
    for (const auto& code : image.codes())
      for (const auto& e : code.entries)
        if (e.atom >= atoms) throw DataError("code atom index exceeds codebook size");

  const std::size_t workers = worker_count(views.size(), threads);
  std::vector<RowMatrix> replicas(workers);
  std::vector<UpliftStats> worker_stats(workers);
  parallel_for(views.size(), threads, [&](std::size_t begin, std::size_t end, int w) {
    RowMatrix& acc = replicas[w];
    acc = RowMatrix::Zero(static_cast<Eigen::Index>(gaussians), static_cast<Eigen::Index>(atoms));
    double* data = acc.data();
    UpliftStats& st = worker_stats[w];
    for (std::size_t v = begin; v < end; ++v) {
      const auto& frags = views[v];
      const auto& image = codes[v];
      for (std::size_t p = 0; p < frags.pixel_count(); ++p) {
        const auto code = image.at(p);
        if (code.empty()) continue;
        const auto list = frags.pixel(p);
        st.fragments += list.size();
        st.atom_updates += list.size() * code.size();
        st.max_updates_per_fragment = std::max<std::uint64_t>(st.max_updates_per_fragment, code.size());
        for (const Fragment& f : list) {
          double* row = data + std::size_t(f.gaussian_id) * atoms;
          const double e = f.blend_weight;
          for (const CodeEntry& c : code) row[c.atom] += c.coefficient * e;
        }
      }
    }
  });

  CoefficientAccumulator out{std::move(replicas[0])};
  for (std::size_t w = 1; w < workers; ++w) out.mass += replicas[w];
  if (stats) {
    *stats = {};
    for (const auto& st : worker_stats) {
      stats->fragments += st.fragments;
      stats->atom_updates += st.atom_updates;
      stats->max_updates_per_fragment = std::max(stats->max_updates_per_fragment, st.max_updates_per_fragment);
    }
  }
  return out;
}

/// Top-K filtering with L1 normalization of every accumulator row. Same
/// result as topk_normalize per row, written straight into the slots.
inline SparseFieldLevel filter_topk(const CoefficientAccumulator& acc, Codebook codebook, std::size_t k) {
  SparseFieldLevel level(std::move(codebook), acc.gaussian_count(), k);
  const std::size_t atoms = acc.atoms();
  const std::size_t keep = std::min(k, atoms);
  std::vector<double> top_v(keep);
  std::vector<std::uint32_t> top_i(keep);
  for (std::size_t i = 0; i < acc.gaussian_count(); ++i) {
    const double* w = acc.mass.data() + i * atoms;
    // Sorted insertion in ascending atom order; strict comparisons keep the
    // lower index ahead on ties.
    std::size_t n = 0;
    for (std::uint32_t a = 0; a < atoms; ++a) {
      const double v = w[a];
      if (!(v > 0.0) || (n == keep && !(v > top_v[n - 1]))) continue;
      std::size_t pos = n < keep ? n++ : keep - 1;
      for (; pos > 0 && v > top_v[pos - 1]; --pos) {
        top_v[pos] = top_v[pos - 1];
        top_i[pos] = top_i[pos - 1];
      }
      top_v[pos] = v;
      top_i[pos] = a;
    }
    double mass = 0.0;
    for (std::size_t s = 0; s < n; ++s) mass += top_v[s];
    for (std::size_t s = 0; s < n; ++s) {
      level.atoms[i * k + s] = top_i[s];
      level.coefficients[i * k + s] = static_cast<float>(top_v[s] / mass);
    }
  }
  return level;
}

/// Sparse coefficient uplifting of one semantic level.
inline SparseFieldLevel uplift_sparse(std::span<const PixelFragments> views, std::span<const CodeImage> codes,
                                      const Codebook& codebook, std::size_t gaussians, std::size_t k, int threads = 1,
                                      UpliftStats* stats = nullptr, CoefficientAccumulator* raw = nullptr) {
  if (k < 1 || k > codebook.size()) throw ConfigError("uplift needs 1 <= K <= L");
  auto acc = accumulate_sparse(views, codes, gaussians, codebook.size(), threads, stats);
  auto level = filter_topk(acc, codebook, k);
  if (raw) *raw = std::move(acc);
  return level;
}

inline SparseFieldLevel uplift_sparse(const GaussianScene& scene, const std::vector<Camera>& cameras,
                                      std::span<const CodeImage> codes, const Codebook& codebook, std::size_t k,
                                      int threads = 1) {
  const auto views = rasterize_views(scene, cameras, threads);
  return uplift_sparse(views, codes, codebook, scene.size(), k, threads);
}

// ---------------------------------------------------------------------------
// Dense baseline

/// Per-pixel D-vector feature map stored as pixel -> row of a shared table
/// (region features are constant per region). kUnassigned pixels have no
/// feature and do not contribute to the normalizer either.
struct FeatureImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> rows;
  std::shared_ptr<const RowMatrix> table;

  std::size_t pixel_count() const { return rows.size(); }
  std::size_t dim() const { return table ? static_cast<std::size_t>(table->cols()) : 0; }
};

struct DenseField {
  RowMatrix features;           // N x D, zero rows for unobserved Gaussians
  std::vector<double> weight;   // Z_i
};

inline DenseField uplift_dense(std::span<const PixelFragments> views, std::span<const FeatureImage> images,
                               std::size_t gaussians, int threads = 1) {
  if (views.size() != images.size()) throw DataError("view count differs between fragments and feature maps");
  std::size_t dim = 0;
  for (std::size_t v = 0; v < images.size(); ++v) {
    if (images[v].pixel_count() != views[v].pixel_count())
      throw DataError("view " + std::to_string(v) + ": feature map size does not match camera");
    if (!images[v].table) continue;
    if (dim != 0 && images[v].dim() != dim) throw DataError("feature dimension mismatch across views");
    dim = images[v].dim();
  }

  const std::size_t workers = worker_count(views.size(), threads);
  std::vector<RowMatrix> replicas(workers);
  std::vector<std::vector<double>> weights(workers);
  parallel_for(views.size(), threads, [&](std::size_t begin, std::size_t end, int w) {
    RowMatrix& acc = replicas[w];
    acc = RowMatrix::Zero(static_cast<Eigen::Index>(gaussians), static_cast<Eigen::Index>(dim));
    weights[w].assign(gaussians, 0.0);
    double* data = acc.data();
    for (std::size_t v = begin; v < end; ++v) {
      const auto& frags = views[v];
      const auto& image = images[v];
      if (!image.table) continue;
      const RowMatrix& table = *image.table;
      for (std::size_t p = 0; p < frags.pixel_count(); ++p) {
        const auto row = image.rows[p];
        if (row == kUnassigned) continue;
        const double* feature = table.data() + std::size_t(row) * dim;
        for (const Fragment& f : frags.pixel(p)) {
          double* dst = data + std::size_t(f.gaussian_id) * dim;
          const double e = f.blend_weight;
          for (std::size_t d = 0; d < dim; ++d) dst[d] += e * feature[d];
          weights[w][f.gaussian_id] += e;
        }
      }
    }
  });

  DenseField out{std::move(replicas[0]), std::move(weights[0])};
  for (std::size_t w = 1; w < workers; ++w) {
    out.features += replicas[w];
    for (std::size_t i = 0; i < gaussians; ++i) out.weight[i] += weights[w][i];
  }
  for (std::size_t i = 0; i < gaussians; ++i)
    if (out.weight[i] > 0.0) out.features.row(static_cast<Eigen::Index>(i)) /= out.weight[i];
  return out;
}

inline DenseField uplift_dense(const GaussianScene& scene, const std::vector<Camera>& cameras,
                               std::span<const FeatureImage> images, int threads = 1) {
  const auto views = rasterize_views(scene, cameras, threads);
  return uplift_dense(views, images, scene.size(), threads);
}

/// Feature image whose rows are the decoded region codes (W C), unnormalized.
inline FeatureImage decoded_feature_image(const RegionMap& map, const std::vector<SparseCode>& codes,
                                          const Codebook& codebook) {
  auto table = std::make_shared<RowMatrix>(RowMatrix::Zero(static_cast<Eigen::Index>(codes.size()),
                                                           static_cast<Eigen::Index>(codebook.dim())));
  for (std::size_t r = 0; r < codes.size(); ++r)
    for (const auto& e : codes[r].entries) table->row(Eigen::Index(r)) += e.coefficient * codebook.basis.row(e.atom);
  FeatureImage img{map.width, map.height, map.ids, table};
  return img;
}

// ---------------------------------------------------------------------------
// .scup

inline void save_sparse_field(const GaussianSparseField& field, const std::string& path) {
  io::Writer w(path);
  w.magic("SCUP");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(field.levels.size()));
  for (const auto& level : field.levels) {
    w.u32(static_cast<std::uint32_t>(level.gaussian_count()));
    w.u32(static_cast<std::uint32_t>(level.codebook.size()));
    w.u32(static_cast<std::uint32_t>(level.codebook.dim()));
    w.u32(static_cast<std::uint32_t>(level.k));
    std::vector<float> cb(level.codebook.size() * level.codebook.dim());
    for (std::size_t i = 0; i < cb.size(); ++i) cb[i] = static_cast<float>(level.codebook.basis.data()[i]);
    w.array(cb);
    for (std::size_t s = 0; s < level.atoms.size(); ++s) {
      w.u32(level.atoms[s]);
      w.f32(level.coefficients[s]);
    }
  }
  w.close();
}

inline GaussianSparseField load_sparse_field(const std::string& path) {
  io::Reader r(path);
  r.expect_magic("SCUP");
  if (r.u32() != 1) throw FormatError(path + ": unsupported .scup version");
  const auto levels = r.u32();
  GaussianSparseField field;
  for (std::uint32_t l = 0; l < levels; ++l) {
    const auto n = r.u32(), atoms = r.u32(), dim = r.u32(), k = r.u32();
    if (k == 0 || k > atoms) throw FormatError(path + ": level " + std::to_string(l) + " has invalid K");
    if (!field.levels.empty() && n != field.gaussian_count())
      throw FormatError(path + ": levels disagree on Gaussian count");
    const auto cb = r.array<float>(std::size_t(atoms) * dim);
    Codebook codebook{RowMatrix(atoms, dim)};
    for (std::size_t i = 0; i < cb.size(); ++i) codebook.basis.data()[i] = cb[i];
    SparseFieldLevel level(std::move(codebook), n, k);
    for (std::size_t s = 0; s < level.atoms.size(); ++s) {
      level.atoms[s] = r.u32();
      level.coefficients[s] = r.f32();
      if (level.atoms[s] != kUnassigned && level.atoms[s] >= atoms)
        throw FormatError(path + ": atom index out of range at slot " + std::to_string(s));
    }
    field.levels.push_back(std::move(level));
  }
  return field;
}

}  // namespace scoup
