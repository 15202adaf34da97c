#pragma once

#include "scoup/common.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace scoup {

/// 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  bool operator==(const Image8&) const = default;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

// libpng reports through these instead of printing; the setjmp handlers
// turn failures into exceptions.
inline void png_silent_error(png_structp png, png_const_charp) { png_longjmp(png, 1); }
inline void png_silent_warning(png_structp, png_const_charp) {}

}  // namespace detail

/// No time or text chunks are written, so output bytes depend only on pixels.
inline void save_png(const Image8& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3) throw DataError("PNG writer supports 1 or 3 channels");
  if (img.pixels.size() != std::size_t(img.width) * img.height * img.channels) throw DataError("image buffer size mismatch");
  std::unique_ptr<std::FILE, detail::FileCloser> file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_silent_error, detail::png_silent_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed: " + path);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = std::size_t(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + std::size_t(y) * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Reads 8-bit gray or RGB PNGs; other layouts are rejected.
inline Image8 load_png(const std::string& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) throw FormatError("cannot open: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_silent_error, detail::png_silent_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("libpng initialization failed");
  }
  Image8 img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path + ": not a readable PNG");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) != 8 || (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path + ": only 8-bit gray or RGB PNGs are supported");
  }
  img.width = int(png_get_image_width(png, info));
  img.height = int(png_get_image_height(png, info));
  img.channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  img.pixels.resize(std::size_t(img.width) * img.height * img.channels);
  const std::size_t stride = std::size_t(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y) png_read_row(png, img.pixels.data() + std::size_t(y) * stride, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

// Binary masks as binary PGM (P5, maxval 255); any non-zero byte is "in".

inline void save_mask_pgm(const std::vector<std::uint8_t>& mask, int width, int height, const std::string& path) {
  if (mask.size() != std::size_t(width) * height) throw DataError("mask size mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "P5\n" << width << " " << height << "\n255\n";
  std::vector<std::uint8_t> bytes(mask.size());
  for (std::size_t p = 0; p < mask.size(); ++p) bytes[p] = mask[p] ? 255 : 0;
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

struct MaskImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> mask;  // 0 or 1
};

inline MaskImage load_mask_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path);
  std::string magic;
  MaskImage m;
  int maxval = 0;
  in >> magic >> m.width >> m.height >> maxval;
  if (!in || magic != "P5" || m.width <= 0 || m.height <= 0 || maxval <= 0 || maxval > 255)
    throw FormatError(path + ": not an 8-bit binary PGM");
  in.get();  // single whitespace before the raster
  std::vector<std::uint8_t> bytes(std::size_t(m.width) * m.height);
  in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (std::size_t(in.gcount()) != bytes.size()) throw FormatError(path + ": truncated raster");
  m.mask.resize(bytes.size());
  for (std::size_t p = 0; p < bytes.size(); ++p) m.mask[p] = bytes[p] ? 1 : 0;
  return m;
}

/// Values in [0, 1] through a blue-cyan-yellow-red ramp.
inline Image8 heatmap_image(const std::vector<double>& values, int width, int height) {
  Image8 img{width, height, 3, std::vector<std::uint8_t>(values.size() * 3)};
  auto to8 = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(x, 0.0, 1.0))); };
  for (std::size_t p = 0; p < values.size(); ++p) {
    const double t = std::clamp(values[p], 0.0, 1.0);
    img.pixels[3 * p + 0] = to8(1.5 - std::abs(4.0 * t - 3.0));
    img.pixels[3 * p + 1] = to8(1.5 - std::abs(4.0 * t - 2.0));
    img.pixels[3 * p + 2] = to8(1.5 - std::abs(4.0 * t - 1.0));
  }
  return img;
}

inline Image8 mask_image(const std::vector<std::uint8_t>& mask, int width, int height) {
  Image8 img{width, height, 1, std::vector<std::uint8_t>(mask.size())};
  for (std::size_t p = 0; p < mask.size(); ++p) img.pixels[p] = mask[p] ? 255 : 0;
  return img;
}

/// Linear RGB rows in [0, 1] to an 8-bit image.
inline Image8 rgb_image(const RowMatrix& rgb, int width, int height) {
  Image8 img{width, height, 3, std::vector<std::uint8_t>(std::size_t(rgb.rows()) * 3)};
  for (Eigen::Index p = 0; p < rgb.rows(); ++p)
    for (int c = 0; c < 3; ++c)
      img.pixels[std::size_t(p) * 3 + c] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(rgb(p, c), 0.0, 1.0)));
  return img;
}

}  // namespace scoup
