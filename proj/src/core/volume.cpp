// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/core/volume.hpp"

#include <cmath>
#include <string>

namespace voxstream::core {

void VolumeDescriptor::validate() const {
  if (dims.x == 0 || dims.y == 0 || dims.z == 0) throw ConfigError("volume dimensions must be positive");
  if (channels < 1 || channels > kMaxChannels) throw ConfigError("channel count must be in [1, 4]");
  if (format != SampleFormat::U8 && format != SampleFormat::U16) throw ConfigError("unknown sample format");
  for (int a = 0; a < 3; ++a)
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) throw ConfigError("voxel spacing must be positive");
  if (background > format_max(format)) throw ConfigError("background value exceeds the sample format range");
  if (!channel_transforms.empty()) {
    if (static_cast<int>(channel_transforms.size()) != channels)
      throw ConfigError("expected one channel transform per channel");
    for (const Mat4& m : channel_transforms) {
      if (std::abs(m.determinant()) < 1e-12) throw ConfigError("channel transform is not invertible");
    }
  }
}

const Mat4& VolumeDescriptor::transform(int channel) const {
  static const Mat4 kIdentity;
  if (channel_transforms.empty()) return kIdentity;
  return channel_transforms.at(static_cast<std::size_t>(channel));
}

bool VolumeDescriptor::has_channel_transforms() const {
  for (const Mat4& m : channel_transforms)
    if (!m.is_identity()) return true;
  return false;
}

void encode_descriptor(ByteWriter& w, const VolumeDescriptor& d) {
  for (int a = 0; a < 3; ++a) w.put<std::uint32_t>(d.dims[a]);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(d.channels));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(d.format));
  w.put<std::uint16_t>(d.background);
  for (int a = 0; a < 3; ++a) w.put<double>(d.spacing[a]);
  w.put<std::uint8_t>(d.channel_transforms.empty() ? 0 : 1);
  for (const Mat4& m : d.channel_transforms)
    for (double v : m.values()) w.put<double>(v);
}

VolumeDescriptor decode_descriptor(ByteReader& r) {
  VolumeDescriptor d;
  for (int a = 0; a < 3; ++a) d.dims[a] = r.get<std::uint32_t>();
  d.channels = r.get<std::uint8_t>();
  const auto fmt = r.get<std::uint8_t>();
  if (fmt != 1 && fmt != 2) throw FormatError("unknown sample format code");
  d.format = static_cast<SampleFormat>(fmt);
  d.background = r.get<std::uint16_t>();
  for (int a = 0; a < 3; ++a) d.spacing[a] = r.get<double>();
  if (d.channels < 1 || d.channels > kMaxChannels) throw FormatError("bad channel count");
  if (r.get<std::uint8_t>() != 0) {
    for (int c = 0; c < d.channels; ++c) {
      std::array<double, 16> m{};
      for (double& v : m) v = r.get<double>();
      d.channel_transforms.emplace_back(m);
    }
  }
  d.validate();
  return d;
}

std::uint32_t default_homogeneity_threshold(SampleFormat f) {
  return static_cast<std::uint32_t>(std::lround(0.05 * format_max(f)));
}

BrickPoolConfig BrickPoolConfig::defaults_for(SampleFormat f) {
  BrickPoolConfig cfg;
  cfg.homogeneity_threshold = default_homogeneity_threshold(f);
  return cfg;
}

void BrickPoolConfig::validate(const VolumeDescriptor& desc) const {
  for (int a = 0; a < 3; ++a) {
    const std::uint32_t m = brick_dims[a];
    const bool flat_axis = m == 1 && desc.dims[a] == 1;
    if (flat_axis) continue;
    if (m < 2 || m % 2 != 0) throw ConfigError("brick dimensions must be even (axis " + std::to_string(a) + ")");
    if (m > 512) throw ConfigError("brick dimension too large");
  }
  if (page_bricks == 0) throw ConfigError("page_bricks must be positive");
  if (ram_page_limit < 2) throw ConfigError("ram_page_limit must be at least 2");
}

VirtualExtent virtual_dims(const Vec3u& dims, const Vec3u& brick_dims) {
  VirtualExtent v;
  int n = 0;
  for (int a = 0; a < 3; ++a) {
    if (dims[a] == 1 && brick_dims[a] == 1) continue;
    while ((std::uint64_t{brick_dims[a]} << n) < dims[a]) ++n;
  }
  v.depth = n;
  for (int a = 0; a < 3; ++a) {
    const bool flat_axis = dims[a] == 1 && brick_dims[a] == 1;
    v.dims[a] = flat_axis ? 1u : static_cast<std::uint32_t>(std::uint64_t{brick_dims[a]} << n);
  }
  return v;
}

std::uint64_t complete_tree_nodes(int levels) {
  std::uint64_t total = 0, level_nodes = 1;
  for (int i = 0; i < levels; ++i) {
    total += level_nodes;
    level_nodes *= 8;
  }
  return total;
}

int depth_of_index(std::uint64_t node) {
  int d = 0;
  while (node != 0) {
    node = parent_index(node);
    ++d;
  }
  return d;
}

VolumeLayout::VolumeLayout(const VolumeDescriptor& desc, const BrickPoolConfig& cfg)
    : dims_(desc.dims),
      brick_(cfg.brick_dims),
      stored_(cfg.stored_dims()),
      virtual_(core::virtual_dims(desc.dims, cfg.brick_dims)),
      channels_(desc.channels),
      format_(desc.format) {
  for (int a = 0; a < 3; ++a) flat_[a] = desc.dims[a] == 1 && cfg.brick_dims[a] == 1;
  stored_voxels_ = static_cast<std::size_t>(voxel_count(stored_));
}

bool VolumeLayout::octant_valid(int octant) const {
  for (int a = 0; a < 3; ++a)
    if (flat_[a] && (octant >> a) & 1) return false;
  return true;
}

Vec3u VolumeLayout::grid_dims(int level) const {
  Vec3u g;
  for (int a = 0; a < 3; ++a)
    g[a] = flat_[a] ? 1u : (virtual_.dims[a] / brick_[a]) >> level;
  return g;
}

Vec3i VolumeLayout::node_voxel_origin(const Vec3u& grid) const {
  return {std::int64_t{grid.x} * brick_.x, std::int64_t{grid.y} * brick_.y, std::int64_t{grid.z} * brick_.z};
}

Box3 VolumeLayout::node_data_box(int level, const Vec3u& grid) const {
  Box3 b;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t span = std::int64_t{brick_[a]} * scale(level, a);
    b.lo[a] = std::int64_t{grid[a]} * span;
    b.hi[a] = std::min<std::int64_t>(b.lo[a] + span, dims_[a]);
  }
  return b;
}

Vec3u VolumeLayout::in_volume_extent(int level, const Vec3u& grid) const {
  Vec3u e;
  for (int a = 0; a < 3; ++a) {
    const std::int64_t first = std::int64_t{grid[a]} * brick_[a];
    const std::int64_t s = scale(level, a);
    // Level-L voxels v with v * s < dims.
    const std::int64_t limit = (std::int64_t{dims_[a]} + s - 1) / s;
    const std::int64_t n = std::clamp<std::int64_t>(limit - first, 0, brick_[a]);
    e[a] = static_cast<std::uint32_t>(n);
  }
  return e;
}

Vec3u VolumeLayout::child_grid(const Vec3u& grid, int octant) const {
  Vec3u c;
  // Along a flat axis the octant-1 child lands at grid 1, which lies outside the volume.
  for (int a = 0; a < 3; ++a) c[a] = grid[a] * 2 + static_cast<std::uint32_t>((octant >> a) & 1);
  return c;
}

Vec3u VolumeLayout::grid_of_index(std::uint64_t node) const {
  // Collect octants from the node up to the root, then replay them downwards.
  std::array<int, 64> octants{};
  int n = 0;
  while (node != 0) {
    octants[static_cast<std::size_t>(n++)] = octant_of(node);
    node = parent_index(node);
  }
  Vec3u g{0, 0, 0};
  for (int i = n - 1; i >= 0; --i) g = child_grid(g, octants[static_cast<std::size_t>(i)]);
  return g;
}

}  // namespace voxstream::core
