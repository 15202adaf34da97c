#pragma once

#include "scoup/common.hpp"
#include "scoup/sparse_coding.hpp"

#include <cmath>

namespace scoup {

// .rmap: "RMAP", u32 version, u32 width, u32 height, u32 region_count,
// width*height u32 ids (0xFFFFFFFF = unassigned).

inline void save_region_map(const RegionMap& map, const std::string& path) {
  if (map.ids.size() != map.pixel_count()) throw DataError("region map size does not match its dimensions");
  io::Writer w(path);
  w.magic("RMAP");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(map.width));
  w.u32(static_cast<std::uint32_t>(map.height));
  w.u32(map.region_count);
  w.array(map.ids);
  w.close();
}

inline RegionMap load_region_map(const std::string& path) {
  io::Reader r(path);
  r.expect_magic("RMAP");
  if (r.u32() != 1) throw FormatError(path + ": unsupported .rmap version");
  RegionMap m;
  m.width = static_cast<int>(r.u32());
  m.height = static_cast<int>(r.u32());
  m.region_count = r.u32();
  m.ids = r.array<std::uint32_t>(m.pixel_count());
  for (std::size_t p = 0; p < m.ids.size(); ++p)
    if (m.ids[p] != kUnassigned && m.ids[p] >= m.region_count)
      throw DataError(path + ": region id " + std::to_string(m.ids[p]) + " at pixel " + std::to_string(p) +
                      " exceeds region_count");
  return m;
}

// .feat: "FEAT", u32 version, u32 count, u32 dim, count*dim f32 row-major.

inline void save_features(const RowMatrix& features, const std::string& path) {
  io::Writer w(path);
  w.magic("FEAT");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(features.rows()));
  w.u32(static_cast<std::uint32_t>(features.cols()));
  std::vector<float> data(static_cast<std::size_t>(features.size()));
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(features.data()[i]);
  w.array(data);
  w.close();
}

inline RowMatrix load_features(const std::string& path) {
  io::Reader r(path);
  r.expect_magic("FEAT");
  if (r.u32() != 1) throw FormatError(path + ": unsupported .feat version");
  const auto count = r.u32(), dim = r.u32();
  const auto data = r.array<float>(std::size_t(count) * dim);
  RowMatrix out(count, dim);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) throw DataError(path + ": non-finite value in row " + std::to_string(i / dim));
    out.data()[i] = data[i];
  }
  return out;
}

// .cbk: "CBK1", u32 L, u32 D, u32 K, L*D f32 codebook, u32 R, then per
// region K slots of (u32 atom, f32 coefficient), 0xFFFFFFFF index = padding.

struct TrainedCodes {
  Codebook codebook;
  std::size_t k = 0;
  std::vector<SparseCode> codes;
};

inline void save_trained_codes(const Codebook& codebook, std::size_t k, const std::vector<SparseCode>& codes,
                               const std::string& path) {
  io::Writer w(path);
  w.magic("CBK1");
  w.u32(static_cast<std::uint32_t>(codebook.size()));
  w.u32(static_cast<std::uint32_t>(codebook.dim()));
  w.u32(static_cast<std::uint32_t>(k));
  std::vector<float> cb(static_cast<std::size_t>(codebook.basis.size()));
  for (std::size_t i = 0; i < cb.size(); ++i) cb[i] = static_cast<float>(codebook.basis.data()[i]);
  w.array(cb);
  w.u32(static_cast<std::uint32_t>(codes.size()));
  for (const auto& code : codes) {
    if (code.size() > k) throw DataError("code exceeds K slots");
    for (std::size_t s = 0; s < k; ++s) {
      w.u32(s < code.size() ? code.entries[s].atom : kUnassigned);
      w.f32(s < code.size() ? static_cast<float>(code.entries[s].coefficient) : 0.f);
    }
  }
  w.close();
}

inline TrainedCodes load_trained_codes(const std::string& path) {
  io::Reader r(path);
  r.expect_magic("CBK1");
  TrainedCodes out;
  const auto atoms = r.u32(), dim = r.u32();
  out.k = r.u32();
  if (out.k == 0 || out.k > atoms) throw FormatError(path + ": invalid K");
  const auto cb = r.array<float>(std::size_t(atoms) * dim);
  out.codebook.basis.resize(atoms, dim);
  for (std::size_t i = 0; i < cb.size(); ++i) out.codebook.basis.data()[i] = cb[i];
  const auto regions = r.u32();
  out.codes.resize(regions);
  for (auto& code : out.codes) {
    for (std::size_t s = 0; s < out.k; ++s) {
      const auto atom = r.u32();
      const auto c = r.f32();
      if (atom == kUnassigned) continue;
      if (atom >= atoms) throw FormatError(path + ": atom index out of range");
      code.entries.push_back({atom, double(c)});
    }
  }
  return out;
}

}  // namespace scoup
