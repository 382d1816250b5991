// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "voxstream/common/bytes.hpp"
#include "voxstream/common/mat4.hpp"
#include "voxstream/common/types.hpp"

namespace voxstream::core {

struct VolumeDescriptor {
  Vec3u dims{1, 1, 1};
  int channels = 1;
  SampleFormat format = SampleFormat::U16;
  Vec3d spacing{1.0, 1.0, 1.0};
  std::uint16_t background = 0;
  // One matrix per channel, applied to world-space sample positions. Empty means identity.
  std::vector<Mat4> channel_transforms;

  // Throws ConfigError.
  void validate() const;
  const Mat4& transform(int channel) const;
  bool has_channel_transforms() const;
  friend bool operator==(const VolumeDescriptor&, const VolumeDescriptor&) = default;
};

// Binary descriptor record shared by the tree file and the slab stream handshake.
void encode_descriptor(ByteWriter& w, const VolumeDescriptor& d);
// Throws FormatError on malformed input and ConfigError on an invalid descriptor.
VolumeDescriptor decode_descriptor(ByteReader& r);

// Default pruning threshold: 5 % of the format's full range.
std::uint32_t default_homogeneity_threshold(SampleFormat f);

struct BrickPoolConfig {
  static constexpr std::uint32_t kOverlap = 1;

  Vec3u brick_dims{64, 64, 64};
  // Channel is homogeneous iff max - min < threshold. Zero disables pruning.
  std::uint32_t homogeneity_threshold = 3277;
  std::uint32_t page_bricks = 64;
  std::uint32_t ram_page_limit = 64;

  static BrickPoolConfig defaults_for(SampleFormat f);

  // Throws ConfigError. Needs the descriptor to recognise flat axes.
  void validate(const VolumeDescriptor& desc) const;
  Vec3u stored_dims() const {
    return {brick_dims.x + 2 * kOverlap, brick_dims.y + 2 * kOverlap, brick_dims.z + 2 * kOverlap};
  }
  friend bool operator==(const BrickPoolConfig&, const BrickPoolConfig&) = default;
};

struct VirtualExtent {
  Vec3u dims;
  int depth = 0;  // N: the root sits at level N, full resolution at level 0
};

// Smallest shared N with brick * 2^N >= dims on every axis. An axis whose volume and brick extents
// are both 1 is flat: it keeps extent 1 and is never subdivided.
VirtualExtent virtual_dims(const Vec3u& dims, const Vec3u& brick_dims);

// Number of nodes in a complete octree with `levels` levels: sum of 8^i for i < levels.
std::uint64_t complete_tree_nodes(int levels);

// Breadth-first node addressing of a complete octree. Octant bits: x = 1, y = 2, z = 4.
inline std::uint64_t child_index(std::uint64_t node, int octant) { return 8 * node + 1 + octant; }
inline std::uint64_t parent_index(std::uint64_t node) { return (node - 1) / 8; }
inline int octant_of(std::uint64_t node) { return static_cast<int>((node - 1) % 8); }
int depth_of_index(std::uint64_t node);

// Geometry shared by construction, serialization, borders and rendering.
class VolumeLayout {
 public:
  VolumeLayout() = default;
  VolumeLayout(const VolumeDescriptor& desc, const BrickPoolConfig& cfg);

  const Vec3u& dims() const { return dims_; }
  const Vec3u& brick_dims() const { return brick_; }
  const Vec3u& stored_dims() const { return stored_; }
  const Vec3u& virtual_dims() const { return virtual_.dims; }
  int depth() const { return virtual_.depth; }
  int channels() const { return channels_; }
  SampleFormat format() const { return format_; }
  bool flat(int axis) const { return flat_[axis]; }
  // Octants with a bit set along a flat axis lie outside the volume.
  bool octant_valid(int octant) const;

  std::size_t stored_voxels() const { return stored_voxels_; }
  std::size_t stored_samples() const { return stored_voxels_ * static_cast<std::size_t>(channels_); }
  std::size_t brick_bytes() const { return stored_samples() * sample_bytes(format_); }
  std::size_t interior_voxels() const { return voxel_count(brick_); }

  // Index of a sample in the interleaved stored brick; l = interior coordinate in [-1, M].
  std::size_t sample_index(std::int64_t lx, std::int64_t ly, std::int64_t lz, int c) const {
    return ((static_cast<std::size_t>(lz + 1) * stored_.y + static_cast<std::size_t>(ly + 1)) * stored_.x +
            static_cast<std::size_t>(lx + 1)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  // Nodes per axis at a level.
  Vec3u grid_dims(int level) const;
  // Level-0 voxel extent covered by one level-L voxel (1 along flat axes).
  std::int64_t scale(int level, int axis) const { return flat_[axis] ? 1 : (std::int64_t{1} << level); }
  // First level-L voxel (level-L voxel units) of the node at grid coordinate g.
  Vec3i node_voxel_origin(const Vec3u& grid) const;
  // Region of level-0 voxels covered by a node, clipped to the original volume.
  Box3 node_data_box(int level, const Vec3u& grid) const;
  bool level_voxel_in_volume(int level, int axis, std::int64_t v) const {
    return v >= 0 && v * scale(level, axis) < static_cast<std::int64_t>(dims_[axis]);
  }
  // Per-axis number of interior voxels of the node whose footprint touches the volume.
  Vec3u in_volume_extent(int level, const Vec3u& grid) const;
  std::uint64_t in_volume_voxels(int level, const Vec3u& grid) const {
    return voxel_count(in_volume_extent(level, grid));
  }
  Vec3u child_grid(const Vec3u& grid, int octant) const;

  // Grid coordinate and level of a BFS node index.
  int level_of_index(std::uint64_t node) const { return depth() - depth_of_index(node); }
  Vec3u grid_of_index(std::uint64_t node) const;

 private:
  Vec3u dims_{}, brick_{}, stored_{};
  VirtualExtent virtual_{};
  std::array<bool, 3> flat_{};
  int channels_ = 1;
  SampleFormat format_ = SampleFormat::U16;
  std::size_t stored_voxels_ = 0;
};

}  // namespace voxstream::core
