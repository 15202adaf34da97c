#pragma once

#include "scoup/common.hpp"
#include "scoup/rasterizer.hpp"
#include "scoup/uplift.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <fstream>
#include <string>

namespace scoup {

/// Rendered coefficient map of one level: pixels x L, row-major pixels.
struct RenderedCoefficientMap {
  int width = 0;
  int height = 0;
  RowMatrix coefficients;
};

/// Blends every level's per-Gaussian codes in a single pass over the
/// fragments: K slots per level per fragment.
inline std::vector<RenderedCoefficientMap> render_coefficients(const PixelFragments& frags,
                                                               const GaussianSparseField& field, int threads = 1) {
  std::vector<RenderedCoefficientMap> maps(field.levels.size());
  for (std::size_t l = 0; l < field.levels.size(); ++l) {
    maps[l].width = frags.width();
    maps[l].height = frags.height();
    maps[l].coefficients = RowMatrix::Zero(static_cast<Eigen::Index>(frags.pixel_count()),
                                           static_cast<Eigen::Index>(field.levels[l].codebook.size()));
  }
  parallel_for(frags.pixel_count(), threads, [&](std::size_t begin, std::size_t end, int) {
    for (std::size_t p = begin; p < end; ++p) {
      for (const Fragment& f : frags.pixel(p)) {
        const double e = f.blend_weight;
        for (std::size_t l = 0; l < field.levels.size(); ++l) {
          const auto& level = field.levels[l];
          double* dst = maps[l].coefficients.data() + p * level.codebook.size();
          const std::size_t base = std::size_t(f.gaussian_id) * level.k;
          for (std::size_t s = 0; s < level.k; ++s) {
            const auto atom = level.atoms[base + s];
            if (atom == kUnassigned) break;
            dst[atom] += double(level.coefficients[base + s]) * e;
          }
        }
      }
    }
  });
  return maps;
}

inline std::vector<RenderedCoefficientMap> render_coefficients(const GaussianScene& scene,
                                                               const GaussianSparseField& field, const Camera& cam,
                                                               int threads = 1) {
  if (field.gaussian_count() != scene.size())
    throw DataError("sparse field holds " + std::to_string(field.gaussian_count()) + " Gaussians, scene has " +
                    std::to_string(scene.size()));
  return render_coefficients(rasterize_fragments(scene, cam, threads), field, threads);
}

/// F(p) = W(p) C, unit-normalized per pixel; zero pixels stay zero.
inline RowMatrix decode(const RenderedCoefficientMap& map, const Codebook& codebook, bool normalize = true) {
  if (static_cast<std::size_t>(map.coefficients.cols()) != codebook.size())
    throw DataError("coefficient map has " + std::to_string(map.coefficients.cols()) + " atoms, codebook has " +
                    std::to_string(codebook.size()));
  RowMatrix features = map.coefficients * codebook.basis;
  if (normalize) {
    for (Eigen::Index p = 0; p < features.rows(); ++p) {
      const double n = features.row(p).norm();
      if (n > 0.0) features.row(p) /= n;
    }
  }
  return features;
}

// ---------------------------------------------------------------------------
// Queries

struct QueryEmbedding {
  std::string label;
  Eigen::VectorXd vector;
};

inline constexpr std::array<const char*, 4> kCanonicalLabels = {"object", "things", "stuff", "texture"};

struct CanonicalSet {
  std::array<Eigen::VectorXd, 4> vectors;
};

struct QueryFile {
  std::vector<QueryEmbedding> queries;
  CanonicalSet canon;

  const QueryEmbedding& find(const std::string& label) const {
    for (const auto& q : queries)
      if (q.label == label) return q;
    throw ConfigError("unknown query label: " + label);
  }
};

inline bool is_canonical_label(const std::string& label) {
  return std::find(kCanonicalLabels.begin(), kCanonicalLabels.end(), label) != kCanonicalLabels.end();
}

inline QueryFile queries_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw FormatError("query file must hold a JSON list");
  QueryFile out;
  std::array<bool, 4> have{};
  for (std::size_t i = 0; i < doc.size(); ++i) {
    QueryEmbedding q;
    try {
      q.label = doc[i].at("label").get<std::string>();
      const auto values = doc[i].at("embedding").get<std::vector<double>>();
      q.vector = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError("query " + std::to_string(i) + ": " + ex.what());
    }
    if (std::abs(q.vector.norm() - 1.0) > 1e-4) throw DataError("query '" + q.label + "' is not unit norm");
    auto it = std::find(kCanonicalLabels.begin(), kCanonicalLabels.end(), q.label);
    if (it != kCanonicalLabels.end()) {
      const auto k = static_cast<std::size_t>(it - kCanonicalLabels.begin());
      out.canon.vectors[k] = q.vector;
      have[k] = true;
    } else {
      out.queries.push_back(std::move(q));
    }
  }
  for (std::size_t k = 0; k < 4; ++k)
    if (!have[k]) throw FormatError(std::string("query file lacks canonical phrase '") + kCanonicalLabels[k] + "'");
  return out;
}

inline QueryFile load_queries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open queries: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(path + ": " + ex.what());
  }
  return queries_from_json(doc);
}

inline void save_queries(const QueryFile& file, const std::string& path) {
  nlohmann::json doc = nlohmann::json::array();
  auto emit = [&](const std::string& label, const Eigen::VectorXd& v) {
    doc.push_back({{"label", label}, {"embedding", std::vector<double>(v.data(), v.data() + v.size())}});
  };
  for (const auto& q : file.queries) emit(q.label, q.vector);
  for (std::size_t k = 0; k < 4; ++k) emit(kCanonicalLabels[k], file.canon.vectors[k]);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << doc.dump(1) << "\n";
}

// ---------------------------------------------------------------------------
// Relevancy

struct RelevancyMap {
  int width = 0;
  int height = 0;
  double alpha = 10.0;
  std::vector<double> values;
};

/// exp(a) / (exp(a) + exp(b)) without overflow.
inline double pairwise_softmax(double a, double b) {
  const double x = a - b;
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double ex = std::exp(x);
  return ex / (1.0 + ex);
}

/// Relevancy of one feature vector; zero features score 0.
inline double relevancy_score(const Eigen::Ref<const Eigen::RowVectorXd>& f, const Eigen::VectorXd& query,
                              const CanonicalSet& canon, double alpha) {
  if (f.squaredNorm() == 0.0) return 0.0;
  const double q = alpha * f.dot(query.transpose());
  double r = 1.0;
  for (const auto& c : canon.vectors) r = std::min(r, pairwise_softmax(q, alpha * f.dot(c.transpose())));
  return r;
}

inline RelevancyMap relevancy(const RowMatrix& features, int width, int height, const QueryEmbedding& query,
                              const CanonicalSet& canon, double alpha = 10.0) {
  if (features.cols() != query.vector.size()) throw DataError("query dimension does not match decoded features");
  RelevancyMap map{width, height, alpha, std::vector<double>(static_cast<std::size_t>(features.rows()))};
  for (Eigen::Index p = 0; p < features.rows(); ++p)
    map.values[static_cast<std::size_t>(p)] = relevancy_score(features.row(p), query.vector, canon, alpha);
  return map;
}

/// Mean over a pool x pool window with edge-replicated borders.
inline std::vector<double> average_pool(const std::vector<double>& values, int width, int height, int pool) {
  if (pool < 1 || pool % 2 == 0) throw ConfigError("pool size must be odd and >= 1");
  const int r = pool / 2;
  // Separable box filter: rows then columns, clamped indices.
  std::vector<double> tmp(values.size()), out(values.size());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double s = 0.0;
      for (int dx = -r; dx <= r; ++dx) s += values[std::size_t(y) * width + std::clamp(x + dx, 0, width - 1)];
      tmp[std::size_t(y) * width + x] = s / pool;
    }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double s = 0.0;
      for (int dy = -r; dy <= r; ++dy) s += tmp[std::size_t(std::clamp(y + dy, 0, height - 1)) * width + x];
      out[std::size_t(y) * width + x] = s / pool;
    }
  return out;
}

struct QueryPrediction {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> mask;
  int point_x = 0;
  int point_y = 0;
  std::size_t level = 0;
  double max_relevancy = 0.0;
  std::vector<double> pooled;
};

/// Pools each level, picks the level with the highest pooled maximum, and
/// thresholds it. The localization point is the first row-major argmax.
inline QueryPrediction postprocess(const std::vector<RelevancyMap>& levels, int pool = 7, double threshold = 0.6) {
  if (levels.empty()) throw DataError("postprocess needs at least one relevancy level");
  if (pool < 1 || pool % 2 == 0) throw ConfigError("pool size must be odd and >= 1");
  QueryPrediction best;
  double best_max = -1.0;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto& m = levels[l];
    auto pooled = average_pool(m.values, m.width, m.height, pool);
    std::size_t arg = 0;
    for (std::size_t p = 1; p < pooled.size(); ++p)
      if (pooled[p] > pooled[arg]) arg = p;
    if (!pooled.empty() && pooled[arg] > best_max) {
      best_max = pooled[arg];
      best.width = m.width;
      best.height = m.height;
      best.level = l;
      best.point_x = static_cast<int>(arg % std::size_t(m.width));
      best.point_y = static_cast<int>(arg / std::size_t(m.width));
      best.max_relevancy = pooled[arg];
      best.pooled = std::move(pooled);
    }
  }
  best.mask.resize(best.pooled.size());
  for (std::size_t p = 0; p < best.pooled.size(); ++p) best.mask[p] = best.pooled[p] >= threshold ? 1 : 0;
  return best;
}

// ---------------------------------------------------------------------------
// Metrics

struct QueryMetrics {
  std::string label;
  double iou = 0.0;
  bool hit = false;
};

struct MetricsReport {
  std::vector<QueryMetrics> rows;

  double mean_iou() const {
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rows) s += r.iou;
    return s / double(rows.size());
  }
  double localization_accuracy() const {
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rows) s += r.hit ? 1.0 : 0.0;
    return s / double(rows.size());
  }
};

/// IoU of two binary masks. Two empty masks agree perfectly (IoU 1).
inline double mask_iou(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt) {
  if (pred.size() != gt.size()) throw DataError("mask size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t p = 0; p < pred.size(); ++p) {
    inter += (pred[p] && gt[p]) ? 1 : 0;
    uni += (pred[p] || gt[p]) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

inline QueryMetrics evaluate(const std::string& label, const QueryPrediction& pred, const std::vector<std::uint8_t>& gt) {
  QueryMetrics m;
  m.label = label;
  m.iou = mask_iou(pred.mask, gt);
  const std::size_t p = std::size_t(pred.point_y) * std::size_t(pred.width) + std::size_t(pred.point_x);
  m.hit = p < gt.size() && gt[p] != 0;
  return m;
}

inline nlohmann::json metrics_to_json(const MetricsReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) rows.push_back({{"label", r.label}, {"iou", r.iou}, {"hit", r.hit}});
  return {{"queries", rows}, {"mIoU", report.mean_iou()}, {"mAcc", report.localization_accuracy()}};
}

}  // namespace scoup
