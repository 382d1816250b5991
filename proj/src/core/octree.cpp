// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/core/octree.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <limits>

namespace voxstream::core {

namespace {

// Round-half-up mean of non-negative integers.
inline std::uint16_t rounded_mean(std::uint64_t sum, std::uint64_t count) {
  return static_cast<std::uint16_t>((2 * sum + count) / (2 * count));
}

}  // namespace

struct Octree::InsertCtx {
  int channel = 0;
  Box3 block{};
  const void* values = nullptr;
  std::vector<ChangeEvent> events;
  std::vector<std::uint64_t> changed;
};

Octree::Octree(const VolumeDescriptor& desc, const BrickPoolConfig& cfg, std::unique_ptr<store::BrickStore> store)
    : desc_(desc), cfg_(cfg), layout_(desc, cfg), store_(std::move(store)) {}

Octree::~Octree() = default;

std::uint64_t Octree::page_capacity_estimate() const {
  std::uint64_t bricks = 0;
  for (int level = 0; level <= layout_.depth(); ++level) {
    std::uint64_t n = 1;
    for (int a = 0; a < 3; ++a) {
      const std::uint64_t span = std::uint64_t{layout_.brick_dims()[a]} * layout_.scale(level, a);
      n *= (layout_.dims()[a] + span - 1) / span;
    }
    bricks += n;
  }
  return bricks / cfg_.page_bricks + 2;
}

std::unique_ptr<Octree> Octree::create(const VolumeDescriptor& desc, const BrickPoolConfig& cfg,
                                       const std::filesystem::path& store_file) {
  desc.validate();
  cfg.validate(desc);
  std::unique_ptr<Octree> t(new Octree(desc, cfg, nullptr));
  if (t->layout_.depth() > 20) throw ConfigError("volume needs more than 20 octree levels");
  t->store_ = store::BrickStore::create(store_file, t->layout_.brick_bytes(),
                                        store::StoreConfig{cfg.page_bricks, cfg.ram_page_limit},
                                        t->page_capacity_estimate());
  Node root;
  for (int c = 0; c < desc.channels; ++c) {
    root.avg[c] = root.bmin[c] = root.bmax[c] = root.rmin[c] = root.rmax[c] = desc.background;
  }
  root.unknown = t->layout_.node_data_box(t->layout_.depth(), {0, 0, 0}).volume() * std::uint64_t(desc.channels);
  t->nodes_.emplace(0, std::move(root));
  return t;
}

bool Octree::homogeneous_stats(const ChannelValues& mn, const ChannelValues& mx) const {
  for (int c = 0; c < desc_.channels; ++c)
    if (std::uint32_t(mx[c] - mn[c]) >= cfg_.homogeneity_threshold) return false;
  return true;
}

bool Octree::absorbs(const Node& n, int channel, std::uint16_t block_min, std::uint16_t block_max) const {
  const std::uint16_t lo = std::min(n.rmin[channel], block_min);
  const std::uint16_t hi = std::max(n.rmax[channel], block_max);
  return std::uint32_t(hi - lo) < cfg_.homogeneity_threshold;
}

store::BrickLocator Octree::allocate_filled(int level, const Vec3u& grid, const ChannelValues& inside) {
  const store::BrickLocator loc = store_->allocate_brick();
  store::BrickHandle h = store_->acquire(loc, store::Access::Write);
  const Vec3u e = layout_.in_volume_extent(level, grid);
  const Vec3u m = layout_.brick_dims();
  const int C = desc_.channels;
  with_sample_type(desc_.format, [&]<class T>() {
    T* data = h.as<T>();
    std::fill(data, data + layout_.stored_samples(), static_cast<T>(desc_.background));
    for (std::uint32_t z = 0; z < std::min(e.z, m.z); ++z)
      for (std::uint32_t y = 0; y < std::min(e.y, m.y); ++y) {
        T* row = data + layout_.sample_index(0, y, z, 0);
        for (std::uint32_t x = 0; x < e.x; ++x)
          for (int c = 0; c < C; ++c) row[std::size_t(x) * C + c] = static_cast<T>(inside[c]);
      }
  });
  return loc;
}

void Octree::free_brick(Node& n) {
  if (!n.brick) return;
  store_->free_brick(*n.brick);
  n.brick.reset();
  n.slices.clear();
  n.border_valid = false;
}

void Octree::create_children(std::uint64_t index, Node& n, int level, const Vec3u& grid,
                             std::vector<ChangeEvent>& ev) {
  const bool collapsed = n.touched;
  for (int o = 0; o < 8; ++o) {
    if (!layout_.octant_valid(o)) continue;
    const Vec3u cg = layout_.child_grid(grid, o);
    const std::uint64_t iv = layout_.in_volume_voxels(level - 1, cg);
    Node child;
    if (collapsed && iv > 0) {
      child.touched = true;
      child.avg = n.avg;
      child.rmin = n.rmin;
      child.rmax = n.rmax;
      child.bmin = n.rmin;
      child.bmax = n.rmax;
    } else {
      for (int c = 0; c < desc_.channels; ++c)
        child.avg[c] = child.bmin[c] = child.bmax[c] = child.rmin[c] = child.rmax[c] = desc_.background;
      child.unknown = layout_.node_data_box(level - 1, cg).volume() * std::uint64_t(desc_.channels);
    }
    const std::uint64_t ci = child_index(index, o);
    nodes_.insert_or_assign(ci, std::move(child));
    ev.push_back({EventKind::NodeCreated, ci});
  }
  n.has_children = true;
}

template <class T>
void Octree::refresh_slices(Node& n, const T* data, int level, const Vec3u& grid, std::int64_t z0,
                            std::int64_t z1) const {
  const Vec3u m = layout_.brick_dims();
  const int C = desc_.channels;
  if (n.slices.empty()) {
    n.slices.assign(std::size_t(m.z) * C, SliceStats{});
    z0 = 0;
    z1 = m.z;
  }
  const Vec3u e = layout_.in_volume_extent(level, grid);
  z1 = std::min<std::int64_t>(z1, e.z);
  for (std::int64_t z = std::max<std::int64_t>(z0, 0); z < z1; ++z) {
    std::array<std::uint16_t, kMaxChannels> mn, mx;
    std::array<std::uint64_t, kMaxChannels> sum{};
    mn.fill(std::numeric_limits<std::uint16_t>::max());
    mx.fill(0);
    for (std::uint32_t y = 0; y < e.y; ++y) {
      const T* row = data + layout_.sample_index(0, y, z, 0);
      for (std::uint32_t x = 0; x < e.x; ++x) {
        for (int c = 0; c < C; ++c) {
          const std::uint16_t v = row[std::size_t(x) * C + c];
          mn[c] = std::min(mn[c], v);
          mx[c] = std::max(mx[c], v);
          sum[c] += v;
        }
      }
    }
    for (int c = 0; c < C; ++c) n.slices[std::size_t(z) * C + c] = {mn[c], mx[c], sum[c]};
  }
}

void Octree::aggregate_stats(Node& n, int level, const Vec3u& grid) const {
  const Vec3u e = layout_.in_volume_extent(level, grid);
  const std::uint64_t total = voxel_count(e);
  const int C = desc_.channels;
  for (int c = 0; c < C; ++c) {
    if (total == 0) {
      n.avg[c] = n.bmin[c] = n.bmax[c] = desc_.background;
      continue;
    }
    std::uint16_t mn = std::numeric_limits<std::uint16_t>::max(), mx = 0;
    std::uint64_t sum = 0;
    for (std::uint32_t z = 0; z < e.z; ++z) {
      const SliceStats& s = n.slices[std::size_t(z) * C + c];
      mn = std::min(mn, s.min);
      mx = std::max(mx, s.max);
      sum += s.sum;
    }
    n.bmin[c] = mn;
    n.bmax[c] = mx;
    n.avg[c] = rounded_mean(sum, total);
  }
}

template <class T>
void Octree::halfsample_region(T* parent, const Node& child, int level, const Vec3u& grid, int octant,
                               const Box3& region) const {
  if (region.empty()) return;
  const Vec3u m = layout_.brick_dims();
  const Vec3u cg = layout_.child_grid(grid, octant);
  const Vec3u ce = layout_.in_volume_extent(level - 1, cg);
  const int C = desc_.channels;
  const T bg = static_cast<T>(desc_.background);

  // Per axis and parent coordinate: first child coordinate and number of in-volume child voxels.
  struct Tap {
    std::int64_t first;
    int n;
  };
  std::array<std::vector<Tap>, 3> taps;
  for (int a = 0; a < 3; ++a) {
    const bool flat = layout_.flat(a);
    const std::int64_t off = flat ? 0 : std::int64_t((octant >> a) & 1) * (m[a] / 2);
    for (std::int64_t p = region.lo[a]; p < region.hi[a]; ++p) {
      const std::int64_t first = flat ? p : 2 * (p - off);
      const int span = flat ? 1 : 2;
      int n = 0;
      for (int k = 0; k < span; ++k)
        if (first + k < std::int64_t(ce[a])) ++n;
      taps[a].push_back({first, n});
    }
  }

  std::optional<store::BrickHandle> h;
  const T* cd = nullptr;
  if (child.brick) {
    h.emplace(store_->acquire(*child.brick, store::Access::Read));
    cd = h->as<T>();
  }
  for (std::int64_t pz = region.lo.z; pz < region.hi.z; ++pz) {
    const Tap tz = taps[2][std::size_t(pz - region.lo.z)];
    for (std::int64_t py = region.lo.y; py < region.hi.y; ++py) {
      const Tap ty = taps[1][std::size_t(py - region.lo.y)];
      for (std::int64_t px = region.lo.x; px < region.hi.x; ++px) {
        const Tap tx = taps[0][std::size_t(px - region.lo.x)];
        T* out = parent + layout_.sample_index(px, py, pz, 0);
        const std::uint64_t count = std::uint64_t(tx.n) * ty.n * tz.n;
        if (count == 0) {
          for (int c = 0; c < C; ++c) out[c] = bg;
          continue;
        }
        if (cd == nullptr) {
          for (int c = 0; c < C; ++c) out[c] = static_cast<T>(child.avg[c]);
          continue;
        }
        std::array<std::uint64_t, kMaxChannels> sum{};
        for (int dz = 0; dz < tz.n; ++dz)
          for (int dy = 0; dy < ty.n; ++dy) {
            const T* row = cd + layout_.sample_index(tx.first, ty.first + dy, tz.first + dz, 0);
            for (int dx = 0; dx < tx.n; ++dx)
              for (int c = 0; c < C; ++c) sum[c] += row[std::size_t(dx) * C + c];
          }
        for (int c = 0; c < C; ++c) out[c] = static_cast<T>(rounded_mean(sum[c], count));
      }
    }
  }
}

std::uint64_t Octree::index_of(int level, const Vec3u& grid) const {
  std::uint64_t index = 0;
  for (int l = layout_.depth(); l > level; --l) {
    const int shift = l - 1 - level;
    int o = 0;
    for (int a = 0; a < 3; ++a)
      if ((grid[a] >> shift) & 1u) o |= 1 << a;
    index = child_index(index, o);
  }
  return index;
}

template <class T>
Octree::Change Octree::write_leaf(InsertCtx& ctx, std::uint64_t index, Node& n, const Vec3u& grid) {
  const bool had_brick = n.brick.has_value();
  const ChannelValues old_avg = n.avg;
  const int C = desc_.channels;
  const Vec3u m = layout_.brick_dims();
  const Vec3i origin = layout_.node_voxel_origin(grid);
  const Box3 fp = layout_.node_data_box(0, grid).intersect(ctx.block);
  const std::size_t known_words = (voxel_count(m) * C + 63) / 64;

  if (!n.brick) {
    if (n.touched) {
      // Re-materialize a pruned leaf: every voxel was known and equal to the AVG.
      n.brick = allocate_filled(0, grid, n.avg);
      n.known.clear();
      n.unknown = 0;
    } else {
      ChannelValues bg{};
      bg.fill(desc_.background);
      n.brick = allocate_filled(0, grid, bg);
      n.known.assign(known_words, 0);
    }
    n.slices.clear();
    n.border_valid = false;
  }

  bool changed = !had_brick;
  bool known_changed = false;
  {
    store::BrickHandle h = store_->acquire(*n.brick, store::Access::Write);
    T* data = h.as<T>();
    const T* src = static_cast<const T*>(ctx.values);
    const Vec3i bd = ctx.block.hi - ctx.block.lo;
    for (std::int64_t z = fp.lo.z; z < fp.hi.z; ++z)
      for (std::int64_t y = fp.lo.y; y < fp.hi.y; ++y) {
        const T* in = src + ((z - ctx.block.lo.z) * bd.y + (y - ctx.block.lo.y)) * bd.x + (fp.lo.x - ctx.block.lo.x);
        const std::int64_t ly = y - origin.y, lz = z - origin.z;
        T* out = data + layout_.sample_index(fp.lo.x - origin.x, ly, lz, ctx.channel);
        for (std::int64_t x = fp.lo.x; x < fp.hi.x; ++x, ++in, out += C) {
          if (*out != *in) {
            *out = *in;
            changed = true;
          }
          if (!n.known.empty()) {
            const std::uint64_t bit =
                ((std::uint64_t(lz) * m.y + std::uint64_t(ly)) * m.x + std::uint64_t(x - origin.x)) * C +
                std::uint64_t(ctx.channel);
            std::uint64_t& w = n.known[bit / 64];
            const std::uint64_t mask = std::uint64_t{1} << (bit % 64);
            if ((w & mask) == 0) {
              w |= mask;
              --n.unknown;
              known_changed = true;
            }
          }
        }
      }
    if (n.unknown == 0) n.known.clear();
    if (!changed && !known_changed) return {};
    if (changed) {
      refresh_slices<T>(n, data, 0, grid, fp.lo.z - origin.z, fp.hi.z - origin.z);
      aggregate_stats(n, 0, grid);
    }
  }
  n.touched = true;
  n.rmin = n.bmin;
  n.rmax = n.bmax;
  if (n.unknown == 0 && homogeneous_stats(n.bmin, n.bmax)) free_brick(n);

  Change ch;
  ch.any = true;
  ch.repr = had_brick != n.brick.has_value() || (!n.brick && old_avg != n.avg);
  ch.values = changed && n.brick.has_value();
  ch.local = {fp.lo - origin, fp.hi - origin};
  if (ch.repr || ch.values) {
    ctx.events.push_back({EventKind::NodeUpdated, index});
    ctx.changed.push_back(index);
  }
  return ch;
}

template <class T>
Octree::Change Octree::update_internal(InsertCtx& ctx, std::uint64_t index, Node& n, int level, const Vec3u& grid,
                                       const std::array<Change, 8>& cc, bool structure) {
  bool any = structure, need_values = structure;
  for (const Change& c : cc) {
    any |= c.any;
    need_values |= c.values || c.repr;
  }
  if (!any) return {};

  const bool had_brick = n.brick.has_value();
  const ChannelValues old_avg = n.avg;
  const int C = desc_.channels;
  const Vec3u m = layout_.brick_dims();

  // Unknown count and level-0 value range come straight from the children.
  n.touched = true;
  n.unknown = 0;
  ChannelValues rmin, rmax;
  rmin.fill(std::numeric_limits<std::uint16_t>::max());
  rmax.fill(0);
  bool leafy = true;  // every child is childless and brickless
  for (int o = 0; o < 8; ++o) {
    if (!layout_.octant_valid(o)) continue;
    const Node& child = nodes_.at(child_index(index, o));
    n.unknown += child.unknown;
    if (child.has_children || child.brick) leafy = false;
    if (!node_in_volume(level - 1, layout_.child_grid(grid, o))) continue;
    for (int c = 0; c < C; ++c) {
      rmin[c] = std::min(rmin[c], child.rmin[c]);
      rmax[c] = std::max(rmax[c], child.rmax[c]);
    }
  }
  for (int c = C; c < kMaxChannels; ++c) rmin[c] = rmax[c] = 0;
  n.rmin = rmin;
  n.rmax = rmax;

  Box3 changed_box{};
  bool first_box = true;
  auto octant_region = [&](int o) {
    Box3 r;
    for (int a = 0; a < 3; ++a) {
      if (layout_.flat(a)) {
        r.lo[a] = 0;
        r.hi[a] = 1;
      } else {
        const std::int64_t half = m[a] / 2;
        r.lo[a] = ((o >> a) & 1) * half;
        r.hi[a] = r.lo[a] + half;
      }
    }
    return r;
  };
  auto footprint_region = [&](int o, const Box3& child_local) {
    Box3 r;
    for (int a = 0; a < 3; ++a) {
      if (layout_.flat(a)) {
        r.lo[a] = child_local.lo[a];
        r.hi[a] = child_local.hi[a];
      } else {
        const std::int64_t off = ((o >> a) & 1) * std::int64_t(m[a] / 2);
        r.lo[a] = off + child_local.lo[a] / 2;
        r.hi[a] = off + (child_local.hi[a] + 1) / 2;
      }
    }
    return r;
  };

  if (need_values) {
    auto compute = [&](T* data, bool full) {
      std::int64_t z0 = std::numeric_limits<std::int64_t>::max(), z1 = std::numeric_limits<std::int64_t>::min();
      for (int o = 0; o < 8; ++o) {
        if (!layout_.octant_valid(o)) continue;
        Box3 region;
        if (full || cc[o].repr) {
          region = octant_region(o);
        } else if (cc[o].values) {
          region = footprint_region(o, cc[o].local);
        } else {
          continue;
        }
        halfsample_region<T>(data, nodes_.at(child_index(index, o)), level, grid, o, region);
        z0 = std::min(z0, region.lo.z);
        z1 = std::max(z1, region.hi.z);
        if (first_box) {
          changed_box = region;
          first_box = false;
        } else {
          for (int a = 0; a < 3; ++a) {
            changed_box.lo[a] = std::min(changed_box.lo[a], region.lo[a]);
            changed_box.hi[a] = std::max(changed_box.hi[a], region.hi[a]);
          }
        }
      }
      if (z0 < z1) refresh_slices<T>(n, data, level, grid, z0, z1);
      aggregate_stats(n, level, grid);
    };
    if (n.brick) {
      store::BrickHandle h = store_->acquire(*n.brick, store::Access::Write);
      compute(h.as<T>(), structure);
    } else {
      std::vector<T> tmp(layout_.stored_samples(), static_cast<T>(desc_.background));
      n.slices.clear();
      compute(tmp.data(), true);
      if (index == 0 || !homogeneous_stats(n.bmin, n.bmax)) {
        n.brick = store_->allocate_brick();
        n.border_valid = false;
        store::BrickHandle h = store_->acquire(*n.brick, store::Access::Write);
        std::memcpy(h.bytes().data(), tmp.data(), tmp.size() * sizeof(T));
      } else {
        n.slices.clear();
      }
    }
    if (n.brick && index != 0 && homogeneous_stats(n.bmin, n.bmax)) free_brick(n);
  }

  bool collapsed = false;
  if (leafy && n.unknown == 0 && homogeneous_stats(n.rmin, n.rmax)) {
    for (int o = 0; o < 8; ++o) {
      if (!layout_.octant_valid(o)) continue;
      const std::uint64_t ci = child_index(index, o);
      nodes_.erase(ci);
      ctx.events.push_back({EventKind::NodeDeleted, ci});
    }
    n.has_children = false;
    free_brick(n);
    collapsed = true;
  }

  Change ch;
  ch.any = true;
  ch.repr = had_brick != n.brick.has_value() || (!n.brick && old_avg != n.avg);
  ch.values = need_values && n.brick.has_value() && !first_box;
  ch.local = changed_box;
  if (ch.repr || ch.values || structure || collapsed) {
    ctx.events.push_back({EventKind::NodeUpdated, index});
    if (ch.repr || ch.values) ctx.changed.push_back(index);
  }
  return ch;
}

template <class T>
Octree::Change Octree::insert_rec(InsertCtx& ctx, std::uint64_t index, int level, const Vec3u& grid) {
  Node& n = nodes_.at(index);
  const Box3 fp = layout_.node_data_box(level, grid).intersect(ctx.block);
  if (fp.empty()) return {};

  if (!n.brick && !n.has_children && n.touched && n.unknown == 0) {
    // Pruned node: absorb writes that keep it homogeneous.
    const T* src = static_cast<const T*>(ctx.values);
    const Vec3i bd = ctx.block.hi - ctx.block.lo;
    std::uint16_t bmin = std::numeric_limits<std::uint16_t>::max(), bmax = 0;
    for (std::int64_t z = fp.lo.z; z < fp.hi.z; ++z)
      for (std::int64_t y = fp.lo.y; y < fp.hi.y; ++y) {
        const T* in = src + ((z - ctx.block.lo.z) * bd.y + (y - ctx.block.lo.y)) * bd.x + (fp.lo.x - ctx.block.lo.x);
        for (std::int64_t x = fp.lo.x; x < fp.hi.x; ++x, ++in) {
          bmin = std::min<std::uint16_t>(bmin, *in);
          bmax = std::max<std::uint16_t>(bmax, *in);
        }
      }
    if (absorbs(n, ctx.channel, bmin, bmax)) return {};
  }

  if (level == 0) return write_leaf<T>(ctx, index, n, grid);

  bool structure = false;
  if (!n.has_children) {
    create_children(index, n, level, grid, ctx.events);
    structure = true;
  }
  std::array<Change, 8> cc{};
  for (int o = 0; o < 8; ++o) {
    if (!layout_.octant_valid(o)) continue;
    cc[o] = insert_rec<T>(ctx, child_index(index, o), level - 1, layout_.child_grid(grid, o));
  }
  return update_internal<T>(ctx, index, n, level, grid, cc, structure);
}

void Octree::invalidate_borders(const std::vector<std::uint64_t>& changed, std::vector<ChangeEvent>& ev) {
  for (std::uint64_t index : changed) {
    const int level = layout_.level_of_index(index);
    const Vec3u grid = layout_.grid_of_index(index);
    const Vec3u gd = layout_.grid_dims(level);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const std::int64_t g[3] = {std::int64_t(grid.x) + dx, std::int64_t(grid.y) + dy, std::int64_t(grid.z) + dz};
          bool ok = true;
          for (int a = 0; a < 3; ++a) ok &= g[a] >= 0 && g[a] < std::int64_t(gd[a]);
          if (!ok) continue;
          const std::uint64_t ni = index_of(level, {std::uint32_t(g[0]), std::uint32_t(g[1]), std::uint32_t(g[2])});
          auto it = nodes_.find(ni);
          if (it == nodes_.end() || !it->second.border_valid) continue;
          it->second.border_valid = false;
          if (it->second.brick && ni != index) ev.push_back({EventKind::NodeUpdated, ni});
        }
  }
}

void Octree::push_events(const std::vector<ChangeEvent>& ev) {
  std::lock_guard lock(event_mutex_);
  pending_events_.insert(pending_events_.end(), ev.begin(), ev.end());
}

template <class T>
std::vector<ChangeEvent> Octree::insert_typed(int channel, const Vec3u& origin, const Vec3u& dims, const T* values) {
  if (channel < 0 || channel >= desc_.channels) throw BoundsError("channel out of range");
  for (int a = 0; a < 3; ++a)
    if (std::uint64_t{origin[a]} + dims[a] > desc_.dims[a]) throw BoundsError("block exceeds the volume bounds");
  if (voxel_count(dims) == 0) return {};
  std::unique_lock lock(tree_mutex_);
  InsertCtx ctx;
  ctx.channel = channel;
  ctx.block.lo = {origin.x, origin.y, origin.z};
  ctx.block.hi = {std::int64_t{origin.x} + dims.x, std::int64_t{origin.y} + dims.y, std::int64_t{origin.z} + dims.z};
  ctx.values = values;
  insert_rec<T>(ctx, 0, layout_.depth(), {0, 0, 0});
  if (!ctx.changed.empty()) {
    invalidate_borders(ctx.changed, ctx.events);
    finished_ = false;
  }
  push_events(ctx.events);
  return std::move(ctx.events);
}

std::vector<ChangeEvent> Octree::insert_block(int channel, const Vec3u& origin, const Vec3u& dims,
                                              std::span<const std::uint16_t> values) {
  if (values.size() != voxel_count(dims)) throw BoundsError("value count does not match the block dimensions");
  if (desc_.format == SampleFormat::U16) return insert_typed<std::uint16_t>(channel, origin, dims, values.data());
  std::vector<std::uint8_t> narrow(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] > 0xFF) throw BoundsError("value exceeds the 8-bit sample range");
    narrow[i] = static_cast<std::uint8_t>(values[i]);
  }
  return insert_typed<std::uint8_t>(channel, origin, dims, narrow.data());
}

std::vector<ChangeEvent> Octree::insert_block_bytes(int channel, const Vec3u& origin, const Vec3u& dims,
                                                    std::span<const std::byte> raw) {
  if (raw.size() != voxel_count(dims) * sample_bytes(desc_.format))
    throw BoundsError("payload size does not match the block dimensions");
  if (desc_.format == SampleFormat::U8)
    return insert_typed<std::uint8_t>(channel, origin, dims, reinterpret_cast<const std::uint8_t*>(raw.data()));
  if (reinterpret_cast<std::uintptr_t>(raw.data()) % alignof(std::uint16_t) == 0)
    return insert_typed<std::uint16_t>(channel, origin, dims, reinterpret_cast<const std::uint16_t*>(raw.data()));
  std::vector<std::uint16_t> aligned(raw.size() / 2);
  std::memcpy(aligned.data(), raw.data(), raw.size());
  return insert_typed<std::uint16_t>(channel, origin, dims, aligned.data());
}

std::vector<ChangeEvent> Octree::drain_events() {
  std::lock_guard lock(event_mutex_);
  std::vector<ChangeEvent> out;
  out.swap(pending_events_);
  return out;
}

void Octree::mark_finished() {
  std::unique_lock lock(tree_mutex_);
  finished_ = true;
}

bool Octree::finished() const {
  std::shared_lock lock(tree_mutex_);
  return finished_;
}

bool Octree::borders_complete() const {
  std::shared_lock lock(tree_mutex_);
  if (!finished_) return false;
  for (const auto& [i, n] : nodes_)
    if (n.brick && !n.border_valid) return false;
  return true;
}

NodeInfo Octree::info_of(std::uint64_t index, const Node& n) const {
  NodeInfo info;
  info.index = index;
  info.level = layout_.level_of_index(index);
  info.grid = layout_.grid_of_index(index);
  info.has_children = n.has_children;
  info.brick = n.brick;
  info.touched = n.touched;
  info.in_volume = node_in_volume(info.level, info.grid);
  info.border_valid = n.border_valid;
  info.avg = n.avg;
  info.min = n.brick ? n.bmin : n.rmin;
  info.max = n.brick ? n.bmax : n.rmax;
  info.homogeneous = homogeneous_stats(info.min, info.max);
  info.range_min = n.rmin;
  info.range_max = n.rmax;
  info.unknown = n.unknown;
  return info;
}

std::optional<NodeInfo> Octree::node(std::uint64_t index) const {
  std::shared_lock lock(tree_mutex_);
  auto it = nodes_.find(index);
  if (it == nodes_.end()) return std::nullopt;
  return info_of(index, it->second);
}

std::vector<std::uint64_t> Octree::node_indices() const {
  std::shared_lock lock(tree_mutex_);
  std::vector<std::uint64_t> out;
  out.reserve(nodes_.size());
  for (const auto& [i, n] : nodes_) out.push_back(i);
  return out;
}

std::vector<NodeInfo> Octree::nodes() const {
  std::shared_lock lock(tree_mutex_);
  std::vector<NodeInfo> out;
  out.reserve(nodes_.size());
  for (const auto& [i, n] : nodes_) out.push_back(info_of(i, n));
  return out;
}

TreeStats Octree::stats() const {
  std::shared_lock lock(tree_mutex_);
  TreeStats s;
  s.bricks_per_level.assign(std::size_t(layout_.depth()) + 1, 0);
  s.brick_bytes = layout_.brick_bytes();
  for (const auto& [i, n] : nodes_) {
    ++s.nodes;
    const int level = layout_.level_of_index(i);
    if (n.brick) {
      ++s.bricks;
      ++s.bricks_per_level[std::size_t(level)];
      if (level == 0) ++s.leaf_bricks;
    } else if (n.touched && node_in_volume(level, layout_.grid_of_index(i))) {
      ++s.pruned;
    }
  }
  const std::uint64_t sb = sample_bytes(desc_.format) * std::uint64_t(desc_.channels);
  s.payload_bytes = s.bricks * s.brick_bytes;
  s.interior_payload_bytes = s.bricks * layout_.interior_voxels() * sb;
  s.raw_bytes = voxel_count(desc_.dims) * sb;
  return s;
}

bool Octree::copy_brick(std::uint64_t index, std::span<std::byte> dst, store::Wait wait, bool* border_valid) const {
  std::shared_lock lock(tree_mutex_, std::defer_lock);
  if (wait == store::Wait::NonBlocking) {
    if (!lock.try_lock()) return false;
  } else {
    lock.lock();
  }
  auto it = nodes_.find(index);
  if (it == nodes_.end() || !it->second.brick) return false;
  auto h = store_->acquire_brick(*it->second.brick, store::Access::Read, wait);
  if (!h) return false;
  if (dst.size() < h->bytes().size()) throw BoundsError("destination too small for a brick");
  std::memcpy(dst.data(), h->bytes().data(), h->bytes().size());
  if (border_valid != nullptr) *border_valid = it->second.border_valid;
  return true;
}

std::uint16_t Octree::brick_sample(std::uint64_t index, Vec3i local, int channel) const {
  std::shared_lock lock(tree_mutex_);
  auto it = nodes_.find(index);
  if (it == nodes_.end()) throw BoundsError("no such node");
  if (!it->second.brick) return it->second.avg[channel];
  store::BrickHandle h = store_->acquire(*it->second.brick, store::Access::Read);
  const std::size_t i = layout_.sample_index(local.x, local.y, local.z, channel);
  if (desc_.format == SampleFormat::U8) return h.as<std::uint8_t>()[i];
  return h.as<std::uint16_t>()[i];
}

std::uint16_t Octree::represented_value(const Vec3u& voxel, int channel) const {
  std::shared_lock lock(tree_mutex_);
  std::uint64_t index = 0;
  int level = layout_.depth();
  for (;;) {
    const Node& n = nodes_.at(index);
    Vec3u grid, local;
    for (int a = 0; a < 3; ++a) {
      const std::uint32_t v = static_cast<std::uint32_t>(voxel[a] / layout_.scale(level, a));
      grid[a] = v / layout_.brick_dims()[a];
      local[a] = v % layout_.brick_dims()[a];
    }
    if (level == 0 || !n.has_children) {
      if (!n.brick) return n.avg[channel];
      store::BrickHandle h = store_->acquire(*n.brick, store::Access::Read);
      const std::size_t i = layout_.sample_index(local.x, local.y, local.z, channel);
      if (desc_.format == SampleFormat::U8) return h.as<std::uint8_t>()[i];
      return h.as<std::uint16_t>()[i];
    }
    int o = 0;
    for (int a = 0; a < 3; ++a) {
      if (layout_.flat(a)) continue;
      const std::uint32_t child_v = static_cast<std::uint32_t>(voxel[a] / layout_.scale(level - 1, a));
      if ((child_v / layout_.brick_dims()[a]) & 1u) o |= 1 << a;
    }
    index = child_index(index, o);
    --level;
  }
}

}  // namespace voxstream::core
