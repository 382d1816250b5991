// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "voxstream/core/octree.hpp"
#include "voxstream/device/node_entry.hpp"

namespace voxstream::device {

enum class Strategy { FullFrame, Refinement };

inline constexpr std::uint8_t kFlagUsed = 1;
inline constexpr std::uint8_t kFlagRequested = 2;
inline constexpr std::uint32_t kNoSlot = 0xFFFFFFFFu;
inline constexpr std::uint64_t kNoOwner = ~std::uint64_t{0};

struct DeviceConfig {
  std::uint64_t brick_buffer_bytes = 512ull << 20;
  double upload_budget_ms = 150.0;
};

struct UploadItem {
  std::uint64_t node = 0;
  int level = 0;
  std::uint32_t slot = 0;
  std::uint64_t evicts = kNoOwner;  // node whose brick is replaced, if any
  std::uint64_t age = 0;            // consecutive evaluations the request waited
};

struct UploadPlan {
  std::vector<UploadItem> items;
  std::vector<std::uint64_t> deferred;  // requests left for a later evaluation
};

struct UploadReport {
  std::size_t uploaded = 0;
  std::size_t unavailable = 0;  // skipped because the page cache was busy
  std::size_t dropped = 0;      // node lost its brick since the request
  std::size_t deferred = 0;     // not reached within the budget
  double elapsed_ms = 0.0;
};

class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now_ms() = 0;
};

class SteadyClock final : public Clock {
 public:
  double now_ms() override {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
  }
};

enum class FetchResult { Done, Unavailable, Missing };
// Copies a node's brick into dst and reports whether its border had been filled.
using BrickFetcher = std::function<FetchResult(std::uint64_t node, std::span<std::byte> dst, bool& border_valid)>;

// Renderer-side mirror of an octree: packed node buffer, per-node feedback flags and a bounded
// brick buffer. One coordinator mutates it between passes; renders only read it and set flags.
class DeviceState {
 public:
  DeviceState(const core::Octree& tree, DeviceConfig cfg);

  // Rewrites the entries named by the events from the current tree state.
  void apply_events(std::span<const core::ChangeEvent> events);
  // Drains the tree's event queue and applies it.
  void sync();

  UploadPlan process_flags(Strategy strategy);
  UploadReport upload(const UploadPlan& plan, Clock& clock, const BrickFetcher& fetch);
  UploadReport upload(const UploadPlan& plan);
  FetchResult fetch_from_tree(std::uint64_t node, std::span<std::byte> dst, bool& border_valid) const;

  // Renderer access.
  std::uint64_t entry(std::uint64_t node) const { return entries_[node]; }
  std::span<const std::uint64_t> node_buffer() const { return entries_; }
  std::uint64_t node_count() const { return entries_.size(); }
  void mark_used(std::uint64_t node) const { flags_[node].fetch_or(kFlagUsed, std::memory_order_relaxed); }
  void mark_requested(std::uint64_t node) const { flags_[node].fetch_or(kFlagRequested, std::memory_order_relaxed); }
  std::uint8_t flags(std::uint64_t node) const { return flags_[node].load(std::memory_order_relaxed); }
  void clear_flags();
  const std::byte* slot_data(std::uint32_t slot) const { return bricks_.get() + std::size_t{slot} * brick_bytes_; }
  bool slot_border_valid(std::uint32_t slot) const { return slots_[slot].border_valid; }

  const NodeCodec& codec() const { return codec_; }
  const core::Octree& tree() const { return tree_; }
  const core::VolumeLayout& layout() const { return tree_.layout(); }
  const DeviceConfig& config() const { return cfg_; }
  void set_upload_budget(double ms) { cfg_.upload_budget_ms = ms; }
  std::uint32_t slot_count() const { return static_cast<std::uint32_t>(slots_.size()); }
  std::uint32_t occupied_slots() const;
  std::uint64_t slot_owner(std::uint32_t slot) const { return slots_[slot].owner; }
  std::uint64_t total_uploads() const { return total_uploads_; }
  std::uint64_t total_evictions() const { return total_evictions_; }
  // Occupied slots and entries with the in-buffer bit are in bijection and point at each other.
  bool consistent() const;
  // Drops every resident brick.
  void evict_all();
  // Raw little-endian dump of the node buffer.
  void dump_node_buffer(const std::filesystem::path& path) const;

 private:
  struct Slot {
    std::uint64_t owner = kNoOwner;
    bool used = false;
    bool border_valid = false;
  };

  std::uint64_t entry_from_tree(std::uint64_t node) const;
  void refresh(std::uint64_t node, bool keep_brick);
  void release_slot_of(std::uint64_t node);

  const core::Octree& tree_;
  DeviceConfig cfg_;
  NodeCodec codec_;
  std::size_t brick_bytes_ = 0;
  std::vector<std::uint64_t> entries_;
  std::unique_ptr<std::atomic<std::uint8_t>[]> flags_;
  std::unique_ptr<std::byte[]> bricks_;
  std::vector<Slot> slots_;
  std::vector<std::uint32_t> free_slots_;  // kept sorted descending; back() is the lowest
  std::unordered_map<std::uint64_t, std::uint64_t> request_age_;
  std::vector<std::uint64_t> carried_;  // requests skipped by the last upload
  std::uint64_t total_uploads_ = 0;
  std::uint64_t total_evictions_ = 0;
};

}  // namespace voxstream::device
