// Raster types and their on-disk formats: 8-bit RGB PNG, and float32 depth
// ("DPTH0001", u32 width, u32 height, row-major little-endian float32 meters).
#pragma once

#include "asrf/common.hpp"

#include <png.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace asrf::synth {

/// Row-major, 3 interleaved channels in [0, 1].
struct ImageRGB {
  int width = 0, height = 0;
  std::vector<float> data;

  ImageRGB() = default;
  ImageRGB(int w, int h, float fill = 0.f) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}
  float* px(int u, int v) { return data.data() + (static_cast<std::size_t>(v) * width + u) * 3; }
  const float* px(int u, int v) const { return data.data() + (static_cast<std::size_t>(v) * width + u) * 3; }
  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
  bool operator==(const ImageRGB&) const = default;
};

/// Row-major meters; 0 marks an invalid pixel.
struct DepthMap {
  int width = 0, height = 0;
  std::vector<float> data;

  DepthMap() = default;
  DepthMap(int w, int h, float fill = 0.f) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}
  float& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  float at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  bool operator==(const DepthMap&) const = default;
};

inline std::uint8_t to_u8(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
}

/// Rounds every channel to the nearest 8-bit level, i.e. what a PNG round trip yields.
inline void quantize(ImageRGB& img) {
  for (auto& v : img.data) v = static_cast<float>(to_u8(v)) / 255.f;
}

inline void write_png(const std::string& path, const ImageRGB& img) {
  std::vector<std::uint8_t> buf(img.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_u8(img.data[i]);
  png_image im;
  std::memset(&im, 0, sizeof(im));
  im.version = PNG_IMAGE_VERSION;
  im.width = static_cast<png_uint_32>(img.width);
  im.height = static_cast<png_uint_32>(img.height);
  im.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&im, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path + ": " + im.message);
  }
}

inline ImageRGB read_png(const std::string& path) {
  png_image im;
  std::memset(&im, 0, sizeof(im));
  im.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&im, path.c_str())) {
    throw ValidationError("cannot read PNG " + path + ": " + im.message);
  }
  im.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(im));
  if (!png_image_finish_read(&im, nullptr, buf.data(), 0, nullptr)) {
    throw ValidationError("cannot decode PNG " + path + ": " + im.message);
  }
  ImageRGB img(static_cast<int>(im.width), static_cast<int>(im.height));
  for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = static_cast<float>(buf[i]) / 255.f;
  return img;
}

inline constexpr char kDepthMagic[8] = {'D', 'P', 'T', 'H', '0', '0', '0', '1'};

inline void write_depth(const std::string& path, const DepthMap& d) {
  static_assert(std::endian::native == std::endian::little, "depth raster I/O assumes a little-endian host");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.write(kDepthMagic, 8);
  const std::uint32_t w = static_cast<std::uint32_t>(d.width), h = static_cast<std::uint32_t>(d.height);
  f.write(reinterpret_cast<const char*>(&w), 4);
  f.write(reinterpret_cast<const char*>(&h), 4);
  f.write(reinterpret_cast<const char*>(d.data.data()), static_cast<std::streamsize>(d.data.size() * sizeof(float)));
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline DepthMap read_depth(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("missing depth raster " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kDepthMagic, 8) != 0) throw ValidationError(path + ": not a DPTH0001 raster");
  std::uint32_t w = 0, h = 0;
  f.read(reinterpret_cast<char*>(&w), 4);
  f.read(reinterpret_cast<char*>(&h), 4);
  if (!f || w == 0 || h == 0 || w > 65536 || h > 65536) throw ValidationError(path + ": bad raster size");
  DepthMap d(static_cast<int>(w), static_cast<int>(h));
  f.read(reinterpret_cast<char*>(d.data.data()), static_cast<std::streamsize>(d.data.size() * sizeof(float)));
  if (!f) throw ValidationError(path + ": truncated raster");
  return d;
}

/// Depth mapped through a blue-to-yellow ramp over [lo, hi]; invalid pixels black.
inline ImageRGB colorize_depth(const DepthMap& d, float lo, float hi) {
  ImageRGB img(d.width, d.height);
  for (int v = 0; v < d.height; ++v) {
    for (int u = 0; u < d.width; ++u) {
      const float z = d.at(u, v);
      float* p = img.px(u, v);
      if (!(z > 0.f)) continue;
      const float s = std::clamp((z - lo) / std::max(hi - lo, 1e-6f), 0.f, 1.f);
      p[0] = s;
      p[1] = 0.2f + 0.7f * s * (1.f - 0.5f * s);
      p[2] = 1.f - s;
    }
  }
  return img;
}

}  // namespace asrf::synth
