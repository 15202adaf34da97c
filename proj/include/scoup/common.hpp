#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace scoup {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline constexpr std::uint32_t kUnassigned = 0xFFFFFFFFu;

// Error taxonomy. The CLI maps each family onto its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File does not follow the documented layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input whose values violate an invariant.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Output path cannot be created or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Runs fn(begin, end, worker) over [0, count) split into contiguous chunks.
/// Chunk boundaries depend only on count and threads, so any per-worker
/// reduction merged in worker order is reproducible for a fixed thread count.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count));
  if (workers <= 1) {
    fn(std::size_t{0}, count, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(count, w * chunk);
    const std::size_t end = std::min(count, begin + chunk);
    pool.emplace_back([&fn, begin, end, w] { fn(begin, end, static_cast<int>(w)); });
  }
  for (auto& t : pool) t.join();
}

inline std::size_t worker_count(std::size_t count, int threads) {
  return std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count));
}

namespace io {

// Little-endian binary helpers shared by the .rmap/.feat/.cbk/.scup codecs.
// The host is assumed little-endian (x86-64, aarch64).

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open for writing: " + path);
  }

  void magic(const char (&tag)[5]) { out_.write(tag, 4); }
  void u32(std::uint32_t v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void f32(float v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  template <typename T>
  void array(const std::vector<T>& values) {
    out_.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(T)));
  }

  void close() {
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_);
    out_.close();
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw FormatError("cannot open: " + path);
  }

  void expect_magic(const char (&tag)[5]) {
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, tag, 4) != 0) throw FormatError(path_ + ": bad magic, expected " + std::string(tag, 4));
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  float f32() {
    float v;
    raw(&v, sizeof v);
    return v;
  }
  template <typename T>
  std::vector<T> array(std::size_t n) {
    std::vector<T> v(n);
    raw(v.data(), n * sizeof(T));
    return v;
  }
  const std::string& path() const { return path_; }

 private:
  void raw(void* dst, std::size_t bytes) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in_.gcount()) != bytes) throw FormatError(path_ + ": truncated file");
  }

  std::string path_;
  std::ifstream in_;
};

}  // namespace io
}  // namespace scoup
