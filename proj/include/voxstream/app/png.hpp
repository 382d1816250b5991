// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "voxstream/render/raycaster.hpp"

namespace voxstream::app {

// 8-bit RGBA with straight (non-premultiplied) alpha, as stored in PNG files.
std::vector<std::uint8_t> to_straight_rgba8(const render::Image& img);

std::vector<std::uint8_t> encode_png(const render::Image& img);
void write_png(const std::filesystem::path& path, const render::Image& img);
// Raw dump of to_straight_rgba8, row-major from the top-left.
void write_raw_rgba(const std::filesystem::path& path, const render::Image& img);

struct DecodedImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgba;
};
// Throws FormatError.
DecodedImage decode_png(std::span<const std::uint8_t> data);

}  // namespace voxstream::app
