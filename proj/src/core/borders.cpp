// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/core/octree.hpp"

namespace voxstream::core {

template <class T>
void Octree::fill_borders_of(std::uint64_t index) {
  std::unique_lock lock(tree_mutex_);
  auto it = nodes_.find(index);
  if (it == nodes_.end() || !it->second.brick || it->second.border_valid) return;
  Node& n = it->second;
  const int level = layout_.level_of_index(index);
  const Vec3u grid = layout_.grid_of_index(index);
  const Vec3u m = layout_.brick_dims();
  const Vec3u gd = layout_.grid_dims(level);
  const int C = desc_.channels;
  const T bg = static_cast<T>(desc_.background);

  store::BrickHandle self = store_->acquire(*n.brick, store::Access::Write);
  T* data = self.as<T>();

  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0 && dz == 0) continue;
        const int d[3] = {dx, dy, dz};
        Box3 shell;  // local coordinates of this neighbour's share of the border
        std::int64_t ng[3];
        bool neighbour_exists = true;
        for (int a = 0; a < 3; ++a) {
          const std::int64_t ma = m[a];
          shell.lo[a] = d[a] < 0 ? -1 : (d[a] > 0 ? ma : 0);
          shell.hi[a] = d[a] == 0 ? ma : shell.lo[a] + 1;
          ng[a] = std::int64_t(grid[a]) + d[a];
          if (ng[a] < 0 || ng[a] >= std::int64_t(gd[a])) neighbour_exists = false;
        }

        // Source: the neighbour's brick, else the AVG of the deepest node on its path.
        std::optional<store::BrickHandle> src;
        ChannelValues avg{};
        avg.fill(desc_.background);
        if (neighbour_exists) {
          const Vec3u g{std::uint32_t(ng[0]), std::uint32_t(ng[1]), std::uint32_t(ng[2])};
          std::uint64_t ni = 0;
          for (int l = layout_.depth(); l > level; --l) {
            const Node& p = nodes_.at(ni);
            if (!p.has_children) break;
            const int shift = l - 1 - level;
            int o = 0;
            for (int a = 0; a < 3; ++a)
              if ((g[a] >> shift) & 1u) o |= 1 << a;
            ni = child_index(ni, o);
          }
          const Node& src_node = nodes_.at(ni);
          if (src_node.brick && layout_.level_of_index(ni) == level) {
            src.emplace(store_->acquire(*src_node.brick, store::Access::Read));
          } else {
            avg = src_node.avg;
          }
        }
        const T* sd = src ? src->as<T>() : nullptr;

        for (std::int64_t z = shell.lo.z; z < shell.hi.z; ++z)
          for (std::int64_t y = shell.lo.y; y < shell.hi.y; ++y)
            for (std::int64_t x = shell.lo.x; x < shell.hi.x; ++x) {
              const std::int64_t l[3] = {x, y, z};
              bool inside = true;
              for (int a = 0; a < 3; ++a)
                inside &= layout_.level_voxel_in_volume(level, a, std::int64_t(grid[a]) * m[a] + l[a]);
              T* out = data + layout_.sample_index(x, y, z, 0);
              if (!inside || !neighbour_exists) {
                for (int c = 0; c < C; ++c) out[c] = bg;
              } else if (sd != nullptr) {
                const T* in = sd + layout_.sample_index(x - d[0] * std::int64_t(m.x), y - d[1] * std::int64_t(m.y),
                                                        z - d[2] * std::int64_t(m.z), 0);
                for (int c = 0; c < C; ++c) out[c] = in[c];
              } else {
                for (int c = 0; c < C; ++c) out[c] = static_cast<T>(avg[c]);
              }
            }
      }
  self.release();
  n.border_valid = true;
  push_events({{EventKind::NodeUpdated, index}});
}

void Octree::fill_borders() {
  if (!finished()) throw Error("fill_borders needs a finished construction");
  std::vector<std::uint64_t> todo;
  {
    std::shared_lock lock(tree_mutex_);
    for (const auto& [i, n] : nodes_)
      if (n.brick && !n.border_valid) todo.push_back(i);
  }
  for (std::uint64_t i : todo) {
    if (desc_.format == SampleFormat::U8) {
      fill_borders_of<std::uint8_t>(i);
    } else {
      fill_borders_of<std::uint16_t>(i);
    }
  }
}

std::future<void> Octree::fill_borders_async() {
  return std::async(std::launch::async, [this] { fill_borders(); });
}

}  // namespace voxstream::core
