// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <vector>

#include "voxstream/core/volume.hpp"
#include "voxstream/store/brick_store.hpp"

namespace voxstream::core {

enum class EventKind : std::uint8_t { NodeCreated, NodeDeleted, NodeUpdated };

struct ChangeEvent {
  EventKind kind = EventKind::NodeUpdated;
  std::uint64_t node = 0;
  friend bool operator==(const ChangeEvent&, const ChangeEvent&) = default;
};

// Snapshot of one node, safe to hold without the tree lock.
struct NodeInfo {
  std::uint64_t index = 0;
  int level = 0;
  Vec3u grid{};
  bool has_children = false;
  std::optional<store::BrickLocator> brick;
  bool touched = false;      // some voxel of the footprint has been inserted
  bool in_volume = true;     // footprint intersects the original volume
  bool border_valid = false;
  bool homogeneous = false;  // every channel satisfies max - min < threshold
  ChannelValues avg{};
  ChannelValues min{};       // brick statistics, or the subtree range when brickless
  ChannelValues max{};
  ChannelValues range_min{};  // level-0 value range of the whole subtree
  ChannelValues range_max{};
  std::uint64_t unknown = 0;  // level-0 (voxel, channel) pairs of the footprint not inserted yet

  bool has_brick() const { return brick.has_value(); }
};

struct TreeStats {
  std::uint64_t nodes = 0;
  std::uint64_t bricks = 0;
  std::uint64_t leaf_bricks = 0;
  std::uint64_t pruned = 0;  // touched, in-volume nodes without a brick
  std::uint64_t brick_bytes = 0;
  std::uint64_t payload_bytes = 0;           // bricks including borders
  std::uint64_t interior_payload_bytes = 0;  // bricks without borders
  std::uint64_t raw_bytes = 0;               // original volume, all channels
  std::vector<std::uint64_t> bricks_per_level;

  double payload_ratio() const { return raw_bytes ? double(payload_bytes) / double(raw_bytes) : 0.0; }
  double interior_ratio() const { return raw_bytes ? double(interior_payload_bytes) / double(raw_bytes) : 0.0; }
  double border_overhead() const {
    return interior_payload_bytes ? double(payload_bytes) / double(interior_payload_bytes) - 1.0 : 0.0;
  }
};

// Incrementally built multi-resolution octree over a paged brick pool.
//
// Writers are serialized by a tree-level lock; readers (renderer uploads, statistics) share it.
class Octree {
 public:
  static constexpr const char* kBrickFile = "bricks.vxbp";
  static constexpr const char* kTreeFile = "octree.vxoc";

  // Root-only tree whose working brick pool lives at store_file.
  static std::unique_ptr<Octree> create(const VolumeDescriptor& desc, const BrickPoolConfig& cfg,
                                        const std::filesystem::path& store_file);
  // Opens a directory written by save(). Later inserts modify its brick pool in place.
  static std::unique_ptr<Octree> open(const std::filesystem::path& dir, std::optional<std::uint32_t> ram_page_limit = {});

  ~Octree();
  Octree(const Octree&) = delete;
  Octree& operator=(const Octree&) = delete;

  // Inserts one channel of a block. values are x-fastest and must be in the sample format range.
  // Returns the change events, which are also queued for drain_events().
  std::vector<ChangeEvent> insert_block(int channel, const Vec3u& origin, const Vec3u& dims,
                                        std::span<const std::uint16_t> values);
  // Same with samples in the native format (1 or 2 bytes each, little-endian).
  std::vector<ChangeEvent> insert_block_bytes(int channel, const Vec3u& origin, const Vec3u& dims,
                                              std::span<const std::byte> raw);

  std::vector<ChangeEvent> drain_events();

  void mark_finished();
  bool finished() const;
  // Fills every brick's one-voxel border from same-level neighbours. Idempotent.
  void fill_borders();
  // Runs fill_borders on a background thread, locking the tree one brick at a time.
  std::future<void> fill_borders_async();
  bool borders_complete() const;

  // Writes kBrickFile (bricks in breadth-first order) and kTreeFile into dir. The output depends only
  // on the tree contents, never on insertion history.
  void save(const std::filesystem::path& dir) const;

  std::optional<NodeInfo> node(std::uint64_t index) const;
  std::vector<std::uint64_t> node_indices() const;
  std::vector<NodeInfo> nodes() const;
  TreeStats stats() const;

  // Copies the brick of a node into dst (brick_bytes long). False if the node has no brick, or, when
  // non-blocking, if the tree or the page cache is busy.
  bool copy_brick(std::uint64_t index, std::span<std::byte> dst, store::Wait wait = store::Wait::Blocking,
                  bool* border_valid = nullptr) const;
  // Reads one stored sample (interior coordinate l in [-1, M]) of a node's brick; mainly for tests.
  std::uint16_t brick_sample(std::uint64_t index, Vec3i local, int channel) const;
  // Value of a level-0 voxel as represented by the tree (descends to the deepest node).
  std::uint16_t represented_value(const Vec3u& voxel, int channel) const;

  const VolumeDescriptor& descriptor() const { return desc_; }
  const BrickPoolConfig& config() const { return cfg_; }
  const VolumeLayout& layout() const { return layout_; }
  store::BrickStore& store() const { return *store_; }

 private:
  struct SliceStats {
    std::uint16_t min = 0;
    std::uint16_t max = 0;
    std::uint64_t sum = 0;
  };
  struct Node {
    bool has_children = false;
    bool touched = false;
    bool border_valid = false;
    std::optional<store::BrickLocator> brick;
    ChannelValues avg{}, bmin{}, bmax{}, rmin{}, rmax{};
    std::uint64_t unknown = 0;
    std::vector<std::uint64_t> known;  // leaves while partially known: one bit per (voxel, channel)
    std::vector<SliceStats> slices;    // per (z, channel) of the brick interior; empty = not cached
  };
  struct Change {
    bool any = false;
    bool repr = false;    // brick presence or the AVG of a brickless node changed
    bool values = false;  // brick voxels inside `local` changed
    Box3 local{};       // changed interior voxels (node-local, this node's level)
  };
  struct InsertCtx;

  Octree(const VolumeDescriptor& desc, const BrickPoolConfig& cfg, std::unique_ptr<store::BrickStore> store);

  template <class T>
  std::vector<ChangeEvent> insert_typed(int channel, const Vec3u& origin, const Vec3u& dims, const T* values);
  template <class T>
  Change insert_rec(InsertCtx& ctx, std::uint64_t index, int level, const Vec3u& grid);
  template <class T>
  Change write_leaf(InsertCtx& ctx, std::uint64_t index, Node& n, const Vec3u& grid);
  template <class T>
  Change update_internal(InsertCtx& ctx, std::uint64_t index, Node& n, int level, const Vec3u& grid,
                         const std::array<Change, 8>& child_changes, bool structure);
  template <class T>
  void halfsample_region(T* parent, const Node& child, int level, const Vec3u& grid, int octant,
                         const Box3& region) const;
  template <class T>
  void refresh_slices(Node& n, const T* data, int level, const Vec3u& grid, std::int64_t z0, std::int64_t z1) const;
  void aggregate_stats(Node& n, int level, const Vec3u& grid) const;
  template <class T>
  void fill_borders_of(std::uint64_t index);

  bool node_in_volume(int level, const Vec3u& grid) const { return layout_.in_volume_voxels(level, grid) > 0; }
  bool homogeneous_stats(const ChannelValues& mn, const ChannelValues& mx) const;
  bool absorbs(const Node& n, int channel, std::uint16_t block_min, std::uint16_t block_max) const;
  void create_children(std::uint64_t index, Node& n, int level, const Vec3u& grid, std::vector<ChangeEvent>& ev);
  store::BrickLocator allocate_filled(int level, const Vec3u& grid, const ChannelValues& inside);
  void free_brick(Node& n);
  void invalidate_borders(const std::vector<std::uint64_t>& changed, std::vector<ChangeEvent>& ev);
  NodeInfo info_of(std::uint64_t index, const Node& n) const;
  std::uint64_t page_capacity_estimate() const;
  std::uint64_t index_of(int level, const Vec3u& grid) const;
  void push_events(const std::vector<ChangeEvent>& ev);

  VolumeDescriptor desc_;
  BrickPoolConfig cfg_;
  VolumeLayout layout_;
  std::unique_ptr<store::BrickStore> store_;

  mutable std::shared_mutex tree_mutex_;
  std::map<std::uint64_t, Node> nodes_;
  bool finished_ = false;

  mutable std::mutex event_mutex_;
  std::vector<ChangeEvent> pending_events_;

  friend class OctreeSerializer;
};

}  // namespace voxstream::core
