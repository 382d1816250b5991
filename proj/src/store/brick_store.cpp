// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/store/brick_store.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstring>
#include <limits>

namespace voxstream::store {

namespace {

constexpr char kMagic[4] = {'V', 'X', 'B', 'P'};
constexpr std::size_t kHeaderBytes = 64;
constexpr std::uint64_t kAlign = 4096;

std::uint32_t crc_of(const std::byte* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, std::numeric_limits<uInt>::max() / 2));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <class T>
void put(std::byte* dst, T v) {
  std::memcpy(dst, &v, sizeof(T));
}
template <class T>
T get(const std::byte* src) {
  T v;
  std::memcpy(&v, src, sizeof(T));
  return v;
}

void write_all(int fd, const std::byte* data, std::size_t n, std::uint64_t offset) {
  while (n > 0) {
    const ssize_t w = ::pwrite(fd, data, n, static_cast<off_t>(offset));
    if (w < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("brick pool write failed: ") + std::strerror(errno));
    }
    data += w;
    n -= static_cast<std::size_t>(w);
    offset += static_cast<std::uint64_t>(w);
  }
}

void read_all(int fd, std::byte* data, std::size_t n, std::uint64_t offset) {
  while (n > 0) {
    const ssize_t r = ::pread(fd, data, n, static_cast<off_t>(offset));
    if (r < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("brick pool read failed: ") + std::strerror(errno));
    }
    if (r == 0) throw IoError("brick pool file is truncated");
    data += r;
    n -= static_cast<std::size_t>(r);
    offset += static_cast<std::uint64_t>(r);
  }
}

std::uint64_t bitmap_bytes(std::uint64_t page_capacity, std::uint32_t page_bricks) {
  const std::uint64_t bits = page_capacity * page_bricks;
  return ((bits + 63) / 64) * 8;
}

}  // namespace

std::uint32_t tune_page_bricks(std::uint64_t brick_bytes, std::uint64_t ram_budget_bytes, std::uint32_t requested) {
  if (brick_bytes == 0) return requested;
  const std::uint64_t fit = ram_budget_bytes / 8 / brick_bytes;
  return static_cast<std::uint32_t>(std::clamp<std::uint64_t>(fit, 1, requested));
}

BrickHandle& BrickHandle::operator=(BrickHandle&& o) noexcept {
  if (this != &o) {
    release();
    store_ = o.store_;
    loc_ = o.loc_;
    access_ = o.access_;
    bytes_ = o.bytes_;
    o.store_ = nullptr;
    o.bytes_ = {};
  }
  return *this;
}

void BrickHandle::release() {
  if (store_ != nullptr) {
    store_->release(loc_, access_);
    store_ = nullptr;
    bytes_ = {};
  }
}

BrickStore::BrickStore(std::filesystem::path path, int fd, std::size_t brick_bytes, std::uint32_t page_bricks,
                       std::uint32_t ram_page_limit, std::uint64_t page_capacity)
    : path_(std::move(path)),
      fd_(fd),
      brick_bytes_(brick_bytes),
      page_bricks_(page_bricks),
      page_bytes_(brick_bytes * page_bricks),
      ram_page_limit_(ram_page_limit),
      page_capacity_(page_capacity),
      checksums_(page_capacity, 0),
      written_(page_capacity, false) {}

BrickStore::~BrickStore() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<BrickStore> BrickStore::create(const std::filesystem::path& path, std::size_t brick_bytes,
                                               StoreConfig cfg, std::uint64_t page_capacity) {
  if (brick_bytes == 0 || cfg.page_bricks == 0) throw ConfigError("brick and page sizes must be positive");
  if (cfg.ram_page_limit < 1) throw ConfigError("ram_page_limit must be positive");
  if (page_capacity == 0) page_capacity = 1;
  const int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw IoError("cannot create brick pool " + path.string() + ": " + std::strerror(errno));
  std::unique_ptr<BrickStore> s(
      new BrickStore(path, fd, brick_bytes, cfg.page_bricks, cfg.ram_page_limit, page_capacity));
  std::lock_guard lock(s->mutex_);
  s->write_header_locked();
  return s;
}

std::unique_ptr<BrickStore> BrickStore::open(const std::filesystem::path& path, std::uint32_t ram_page_limit) {
  const int fd = ::open(path.c_str(), O_RDWR);
  if (fd < 0) throw IoError("cannot open brick pool " + path.string() + ": " + std::strerror(errno));
  std::array<std::byte, kHeaderBytes> hdr{};
  try {
    read_all(fd, hdr.data(), hdr.size(), 0);
  } catch (...) {
    ::close(fd);
    throw;
  }
  if (std::memcmp(hdr.data(), kMagic, 4) != 0) {
    ::close(fd);
    throw FormatError("not a brick pool file: " + path.string());
  }
  const auto page_bricks = get<std::uint32_t>(hdr.data() + 8);
  const auto brick_bytes = get<std::uint64_t>(hdr.data() + 16);
  const auto capacity = get<std::uint64_t>(hdr.data() + 32);
  std::unique_ptr<BrickStore> s(new BrickStore(path, fd, static_cast<std::size_t>(brick_bytes), page_bricks,
                                               std::max<std::uint32_t>(ram_page_limit, 1), capacity));
  s->read_header();
  return s;
}

std::uint64_t BrickStore::data_offset() const {
  const std::uint64_t meta = kHeaderBytes + bitmap_bytes(page_capacity_, page_bricks_) + 4 * page_capacity_;
  return (meta + kAlign - 1) / kAlign * kAlign;
}

void BrickStore::write_header_locked() {
  const std::uint64_t bm = bitmap_bytes(page_capacity_, page_bricks_);
  std::vector<std::byte> buf(kHeaderBytes + bm + 4 * page_capacity_, std::byte{0});
  std::memcpy(buf.data(), kMagic, 4);
  put<std::uint32_t>(buf.data() + 4, kVersion);
  put<std::uint32_t>(buf.data() + 8, page_bricks_);
  put<std::uint64_t>(buf.data() + 16, brick_bytes_);
  put<std::uint64_t>(buf.data() + 24, page_count_);
  put<std::uint64_t>(buf.data() + 32, page_capacity_);
  put<std::uint64_t>(buf.data() + 40, next_slot_);
  std::byte* bits = buf.data() + kHeaderBytes;
  const std::uint64_t total_bits = page_capacity_ * page_bricks_;
  for (std::uint64_t s = 0; s < total_bits; ++s) {
    if (s >= next_slot_ || free_slots_.count(s) != 0) bits[s / 8] |= std::byte(1u << (s % 8));
  }
  std::byte* sums = bits + bm;
  for (std::uint64_t p = 0; p < page_capacity_; ++p) put<std::uint32_t>(sums + 4 * p, checksums_[p]);
  put<std::uint32_t>(buf.data() + 48, crc_of(bits, bm + 4 * page_capacity_));
  put<std::uint32_t>(buf.data() + 60, crc_of(buf.data(), 60));
  write_all(fd_, buf.data(), buf.size(), 0);
  header_dirty_ = false;
}

void BrickStore::read_header() {
  const std::uint64_t bm = bitmap_bytes(page_capacity_, page_bricks_);
  std::vector<std::byte> buf(kHeaderBytes + bm + 4 * page_capacity_);
  read_all(fd_, buf.data(), buf.size(), 0);
  if (get<std::uint32_t>(buf.data() + 60) != crc_of(buf.data(), 60))
    throw FormatError("brick pool header checksum mismatch");
  if (get<std::uint32_t>(buf.data() + 4) != kVersion) throw FormatError("unsupported brick pool version");
  const std::byte* bits = buf.data() + kHeaderBytes;
  if (get<std::uint32_t>(buf.data() + 48) != crc_of(bits, bm + 4 * page_capacity_))
    throw FormatError("brick pool metadata checksum mismatch");
  page_count_ = get<std::uint64_t>(buf.data() + 24);
  next_slot_ = get<std::uint64_t>(buf.data() + 40);
  // flush() writes every opened page, so all of them are on disk.
  for (std::uint64_t p = 0; p < page_count_; ++p) written_[p] = true;
  for (std::uint64_t s = 0; s < next_slot_; ++s)
    if ((std::to_integer<unsigned>(bits[s / 8]) >> (s % 8)) & 1u) free_slots_.insert(s);
  const std::byte* sums = bits + bm;
  for (std::uint64_t p = 0; p < page_capacity_; ++p) checksums_[p] = get<std::uint32_t>(sums + 4 * p);
  header_dirty_ = false;
}

void BrickStore::read_page_from_disk(std::uint32_t page_id, std::vector<std::byte>& out) const {
  out.resize(page_bytes_);
  read_all(fd_, out.data(), out.size(), page_offset(page_id));
  if (crc_of(out.data(), out.size()) != checksums_[page_id])
    throw IoError("checksum mismatch in brick pool page " + std::to_string(page_id));
}

void BrickStore::write_page_locked(std::uint32_t page_id, Page& page) {
  write_all(fd_, page.data.data(), page.data.size(), page_offset(page_id));
  checksums_[page_id] = crc_of(page.data.data(), page.data.size());
  written_[page_id] = true;
  page.dirty = false;
  header_dirty_ = true;
  ++counters_.page_writes;
}

bool BrickStore::has_room() const { return pages_.size() < ram_page_limit_; }

bool BrickStore::evict_one(std::unique_lock<std::mutex>&) {
  std::uint32_t victim = 0;
  Page* best = nullptr;
  for (auto& [id, page] : pages_) {
    if (page->pins > 0 || page->state != PageState::Ready) continue;
    if (best == nullptr || page->last_use < best->last_use) {
      best = page.get();
      victim = id;
    }
  }
  if (best == nullptr) return false;
  if (best->dirty) write_page_locked(victim, *best);
  pages_.erase(victim);
  ++counters_.evictions;
  return true;
}

std::optional<BrickHandle> BrickStore::acquire_brick(BrickLocator loc, Access access, Wait wait) {
  std::unique_lock lock(mutex_);
  const std::uint64_t global = std::uint64_t{loc.page_id} * page_bricks_ + loc.slot;
  if (loc.slot >= page_bricks_ || global >= next_slot_ || free_slots_.count(global) != 0)
    throw BoundsError("brick locator does not refer to an allocated brick");
  std::uint64_t ticket = 0;
  bool queued = false;
  for (;;) {
    auto it = pages_.find(loc.page_id);
    if (it != pages_.end()) {
      Page& page = *it->second;
      if (page.state == PageState::Loading) {
        cv_.wait(lock);
        continue;
      }
      if (queued) {
        waiters_.pop_front();
        cv_.notify_all();
      }
      ++page.pins;
      page.last_use = ++tick_;
      BrickHandle h;
      h.store_ = this;
      h.loc_ = loc;
      h.access_ = access;
      h.bytes_ = std::span<std::byte>(page.data.data() + std::size_t{loc.slot} * brick_bytes_, brick_bytes_);
      return h;
    }
    if (!has_room() && !evict_one(lock)) {
      if (wait == Wait::NonBlocking) {
        ++counters_.unavailable;
        return std::nullopt;
      }
      if (!queued) {
        ticket = next_ticket_++;
        waiters_.push_back(ticket);
        queued = true;
      }
      cv_.wait(lock);
      continue;
    }
    if (queued && waiters_.front() != ticket) {
      // Room opened up but an older waiter goes first.
      cv_.wait(lock);
      continue;
    }
    // Load outside the lock; other requests for this page wait on the Loading state.
    auto page = std::make_unique<Page>();
    Page* raw = page.get();
    raw->pins = 1;
    pages_.emplace(loc.page_id, std::move(page));
    const bool on_disk = written_[loc.page_id];
    lock.unlock();
    std::vector<std::byte> data;
    try {
      if (on_disk) {
        read_page_from_disk(loc.page_id, data);
      } else {
        data.assign(page_bytes_, std::byte{0});
      }
    } catch (...) {
      lock.lock();
      pages_.erase(loc.page_id);
      if (queued) waiters_.pop_front();
      cv_.notify_all();
      throw;
    }
    lock.lock();
    raw->data = std::move(data);
    raw->state = PageState::Ready;
    // Fresh pages have never been written and must reach disk before eviction.
    raw->dirty = !on_disk;
    raw->last_use = ++tick_;
    if (on_disk) ++counters_.page_reads;
    if (queued) waiters_.pop_front();
    cv_.notify_all();
    BrickHandle h;
    h.store_ = this;
    h.loc_ = loc;
    h.access_ = access;
    h.bytes_ = std::span<std::byte>(raw->data.data() + std::size_t{loc.slot} * brick_bytes_, brick_bytes_);
    return h;
  }
}

void BrickStore::release(BrickLocator loc, Access access) {
  std::lock_guard lock(mutex_);
  auto it = pages_.find(loc.page_id);
  if (it == pages_.end() || it->second->pins <= 0) return;  // double release: ignored in release builds
  Page& page = *it->second;
  --page.pins;
  if (access == Access::Write) page.dirty = true;
  if (page.pins == 0) cv_.notify_all();
}

BrickLocator BrickStore::allocate_brick() {
  std::lock_guard lock(mutex_);
  std::uint64_t global;
  if (!free_slots_.empty()) {
    global = *free_slots_.begin();
    free_slots_.erase(free_slots_.begin());
  } else {
    global = next_slot_;
    if (global / page_bricks_ >= page_capacity_) throw IoError("brick pool is full");
    ++next_slot_;
    page_count_ = std::max<std::uint64_t>(page_count_, global / page_bricks_ + 1);
  }
  header_dirty_ = true;
  return {static_cast<std::uint32_t>(global / page_bricks_), static_cast<std::uint32_t>(global % page_bricks_)};
}

void BrickStore::free_brick(BrickLocator loc) {
  std::lock_guard lock(mutex_);
  const std::uint64_t global = std::uint64_t{loc.page_id} * page_bricks_ + loc.slot;
  if (global >= next_slot_ || free_slots_.count(global) != 0) throw BoundsError("freeing an unallocated brick");
  free_slots_.insert(global);
  header_dirty_ = true;
}

bool BrickStore::slot_free_locked(std::uint64_t global_slot) const {
  return global_slot >= next_slot_ || free_slots_.count(global_slot) != 0;
}

bool BrickStore::is_allocated(BrickLocator loc) const {
  std::lock_guard lock(mutex_);
  if (loc.slot >= page_bricks_) return false;
  return !slot_free_locked(std::uint64_t{loc.page_id} * page_bricks_ + loc.slot);
}

void BrickStore::flush() {
  std::lock_guard lock(mutex_);
  bool wrote = false;
  for (auto& [id, page] : pages_) {
    if (page->state == PageState::Ready && page->dirty) {
      write_page_locked(id, *page);
      wrote = true;
    }
  }
  // Opened pages that were never touched are written as zeros so the file covers page_count_.
  std::vector<std::byte> zeros;
  for (std::uint64_t p = 0; p < page_count_; ++p) {
    if (written_[p] || pages_.count(static_cast<std::uint32_t>(p))) continue;
    zeros.assign(page_bytes_, std::byte{0});
    Page blank;
    blank.data = std::move(zeros);
    write_page_locked(static_cast<std::uint32_t>(p), blank);
    zeros = std::move(blank.data);
    wrote = true;
  }
  if (header_dirty_) {
    write_header_locked();
    wrote = true;
  }
  if (wrote && ::fsync(fd_) != 0) throw IoError(std::string("fsync failed: ") + std::strerror(errno));
}

IntegrityReport BrickStore::verify() const {
  IntegrityReport r;
  std::uint64_t pages = 0;
  try {
    std::unique_ptr<BrickStore> fresh = BrickStore::open(path_, 1);
    r.header_ok = true;
    pages = fresh->page_count_;
    std::vector<std::byte> buf;
    for (std::uint64_t p = 0; p < pages; ++p) {
      ++r.pages_checked;
      try {
        fresh->read_page_from_disk(static_cast<std::uint32_t>(p), buf);
      } catch (const IoError&) {
        ++r.bad_pages;
      }
    }
  } catch (const Error&) {
    r.header_ok = false;
  }
  return r;
}

std::uint64_t BrickStore::page_count() const {
  std::lock_guard lock(mutex_);
  return page_count_;
}

std::uint64_t BrickStore::live_bricks() const {
  std::lock_guard lock(mutex_);
  return next_slot_ - free_slots_.size();
}

std::size_t BrickStore::resident_pages() const {
  std::lock_guard lock(mutex_);
  return pages_.size();
}

bool BrickStore::page_resident(std::uint32_t page_id) const {
  std::lock_guard lock(mutex_);
  return pages_.count(page_id) != 0;
}

int BrickStore::pin_count(std::uint32_t page_id) const {
  std::lock_guard lock(mutex_);
  auto it = pages_.find(page_id);
  return it == pages_.end() ? 0 : it->second->pins;
}

bool BrickStore::page_dirty(std::uint32_t page_id) const {
  std::lock_guard lock(mutex_);
  auto it = pages_.find(page_id);
  return it != pages_.end() && it->second->dirty;
}

std::uint64_t BrickStore::file_size() const {
  struct stat st {};
  if (::fstat(fd_, &st) != 0) throw IoError("fstat failed");
  return static_cast<std::uint64_t>(st.st_size);
}

StoreCounters BrickStore::counters() const {
  std::lock_guard lock(mutex_);
  return counters_;
}

void BrickStore::reset_counters() {
  std::lock_guard lock(mutex_);
  counters_ = {};
}

}  // namespace voxstream::store
