// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/app/png.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace voxstream::app {

namespace {

std::uint8_t to8(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

std::vector<std::uint8_t> to_straight_rgba8(const render::Image& img) {
  std::vector<std::uint8_t> out(img.rgba.size());
  for (std::size_t i = 0; i < img.rgba.size(); i += 4) {
    const double a = img.rgba[i + 3];
    for (int k = 0; k < 3; ++k) out[i + std::size_t(k)] = a > 0.0 ? to8(img.rgba[i + std::size_t(k)] / a) : 0;
    out[i + 3] = to8(a);
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const render::Image& img) {
  const std::vector<std::uint8_t> px = to_straight_rgba8(img);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGBA;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, px.data(), 0, nullptr))
    throw IoError(std::string("png encode failed: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, px.data(), 0, nullptr))
    throw IoError(std::string("png encode failed: ") + image.message);
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const render::Image& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

void write_raw_rgba(const std::filesystem::path& path, const render::Image& img) {
  const auto px = to_straight_rgba8(img);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

DecodedImage decode_png(std::span<const std::uint8_t> data) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, data.data(), data.size()))
    throw FormatError(std::string("png decode failed: ") + image.message);
  image.format = PNG_FORMAT_RGBA;
  DecodedImage out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.rgba.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.rgba.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError(std::string("png decode failed: ") + image.message);
  }
  return out;
}

}  // namespace voxstream::app
