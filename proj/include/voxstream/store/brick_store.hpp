// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "voxstream/common/types.hpp"

namespace voxstream::store {

struct BrickLocator {
  std::uint32_t page_id = 0;
  std::uint32_t slot = 0;

  friend auto operator<=>(const BrickLocator&, const BrickLocator&) = default;
};

struct StoreConfig {
  std::uint32_t page_bricks = 64;
  std::uint32_t ram_page_limit = 64;
};

// Largest page size <= requested such that one page uses at most 1/8 of the RAM budget.
std::uint32_t tune_page_bricks(std::uint64_t brick_bytes, std::uint64_t ram_budget_bytes, std::uint32_t requested);

enum class Access { Read, Write };
enum class Wait { Blocking, NonBlocking };

struct StoreCounters {
  std::uint64_t page_reads = 0;   // pages loaded from disk (page faults)
  std::uint64_t page_writes = 0;  // pages written back
  std::uint64_t evictions = 0;
  std::uint64_t unavailable = 0;  // non-blocking requests refused because every page was pinned
};

struct IntegrityReport {
  bool header_ok = false;
  std::uint64_t pages_checked = 0;
  std::uint64_t bad_pages = 0;
  bool ok() const { return header_ok && bad_pages == 0; }
};

class BrickStore;

// Pins one brick's page for the lifetime of the handle.
class BrickHandle {
 public:
  BrickHandle() = default;
  BrickHandle(BrickHandle&& o) noexcept { *this = std::move(o); }
  BrickHandle& operator=(BrickHandle&& o) noexcept;
  BrickHandle(const BrickHandle&) = delete;
  BrickHandle& operator=(const BrickHandle&) = delete;
  ~BrickHandle() { release(); }

  std::span<std::byte> bytes() { return bytes_; }
  std::span<const std::byte> bytes() const { return bytes_; }
  template <class T>
  T* as() {
    return reinterpret_cast<T*>(bytes_.data());
  }
  template <class T>
  const T* as() const {
    return reinterpret_cast<const T*>(bytes_.data());
  }
  BrickLocator locator() const { return loc_; }
  bool valid() const { return store_ != nullptr; }
  // Unpins the page. A write handle marks the page dirty.
  void release();

 private:
  friend class BrickStore;
  BrickStore* store_ = nullptr;
  BrickLocator loc_{};
  Access access_ = Access::Read;
  std::span<std::byte> bytes_{};
};

// Disk-backed brick pool organised in fixed-size pages with a bounded, strict-LRU RAM cache.
//
// File layout (little-endian): 64-byte header ("VXBP", version, page_bricks, brick_bytes, page_count,
// page_capacity, header CRC), the free-slot bitmap (bit set = slot free), one CRC-32 per page, then
// raw pages aligned to 4 KiB. Thread-safe.
class BrickStore {
 public:
  static constexpr std::uint32_t kVersion = 1;

  // Creates (truncates) a store file. page_capacity bounds the number of pages ever opened.
  static std::unique_ptr<BrickStore> create(const std::filesystem::path& path, std::size_t brick_bytes,
                                            StoreConfig cfg, std::uint64_t page_capacity);
  // Opens an existing store; throws IoError / FormatError on a bad header.
  static std::unique_ptr<BrickStore> open(const std::filesystem::path& path, std::uint32_t ram_page_limit);

  ~BrickStore();
  BrickStore(const BrickStore&) = delete;
  BrickStore& operator=(const BrickStore&) = delete;

  // Recycles the lowest freed slot before opening a new page. Throws IoError when full.
  BrickLocator allocate_brick();
  void free_brick(BrickLocator loc);
  bool is_allocated(BrickLocator loc) const;

  // nullopt means Unavailable: the page is absent and every resident page is pinned.
  // Blocking callers wait (FIFO) instead. I/O failures throw IoError.
  std::optional<BrickHandle> acquire_brick(BrickLocator loc, Access access, Wait wait = Wait::Blocking);
  BrickHandle acquire(BrickLocator loc, Access access) { return *acquire_brick(loc, access, Wait::Blocking); }

  // Writes every dirty page and the header, then syncs.
  void flush();
  // Reads every page from disk and checks its checksum.
  IntegrityReport verify() const;

  std::size_t brick_bytes() const { return brick_bytes_; }
  std::uint32_t page_bricks() const { return page_bricks_; }
  std::size_t page_bytes() const { return page_bytes_; }
  std::uint32_t ram_page_limit() const { return ram_page_limit_; }
  std::uint64_t page_count() const;
  std::uint64_t page_capacity() const { return page_capacity_; }
  std::uint64_t live_bricks() const;
  std::size_t resident_pages() const;
  bool page_resident(std::uint32_t page_id) const;
  int pin_count(std::uint32_t page_id) const;
  bool page_dirty(std::uint32_t page_id) const;
  std::uint64_t file_size() const;
  StoreCounters counters() const;
  void reset_counters();
  const std::filesystem::path& path() const { return path_; }

 private:
  friend class BrickHandle;
  enum class PageState { Loading, Ready };
  struct Page {
    std::vector<std::byte> data;
    int pins = 0;
    bool dirty = false;
    std::uint64_t last_use = 0;
    PageState state = PageState::Loading;
  };

  BrickStore(std::filesystem::path path, int fd, std::size_t brick_bytes, std::uint32_t page_bricks,
             std::uint32_t ram_page_limit, std::uint64_t page_capacity);

  void release(BrickLocator loc, Access access);
  std::uint64_t data_offset() const;
  std::uint64_t page_offset(std::uint32_t page_id) const { return data_offset() + page_id * page_bytes_; }
  // Caller holds mutex_. Evicts the least recently used unpinned page; false if none.
  bool evict_one(std::unique_lock<std::mutex>& lock);
  bool has_room() const;
  void write_page_locked(std::uint32_t page_id, Page& page);
  void write_header_locked();
  void read_header();
  void read_page_from_disk(std::uint32_t page_id, std::vector<std::byte>& out) const;
  bool slot_free_locked(std::uint64_t global_slot) const;

  std::filesystem::path path_;
  int fd_ = -1;
  std::size_t brick_bytes_ = 0;
  std::uint32_t page_bricks_ = 0;
  std::size_t page_bytes_ = 0;
  std::uint32_t ram_page_limit_ = 0;
  std::uint64_t page_capacity_ = 0;

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::uint64_t page_count_ = 0;    // pages opened so far
  std::uint64_t next_slot_ = 0;     // first never-allocated global slot
  std::set<std::uint64_t> free_slots_;
  std::vector<std::uint32_t> checksums_;
  std::vector<bool> written_;  // page has reached disk at least once
  bool header_dirty_ = true;
  std::uint64_t tick_ = 0;
  std::unordered_map<std::uint32_t, std::unique_ptr<Page>> pages_;
  std::deque<std::uint64_t> waiters_;
  std::uint64_t next_ticket_ = 0;
  StoreCounters counters_{};
};

}  // namespace voxstream::store
