// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/device/device_state.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace voxstream::device {

namespace {
constexpr std::uint64_t kSlotMask = 0xFFFFFFull;  // bits 0..23: flags and child pointer
}

DeviceState::DeviceState(const core::Octree& tree, DeviceConfig cfg)
    : tree_(tree), cfg_(cfg), codec_(tree.descriptor().channels, tree.descriptor().format) {
  const int depth = tree.layout().depth();
  if (depth > kMaxDepth) throw ConfigError("tree has more than nine levels; child pointers would overflow");
  if (cfg_.upload_budget_ms < 0.0 || cfg_.upload_budget_ms > 1000.0)
    throw ConfigError("upload budget must lie in [0, 1000] ms");
  brick_bytes_ = tree.layout().brick_bytes();
  const std::uint64_t nodes = core::complete_tree_nodes(depth + 1);
  entries_.assign(nodes, 0);
  flags_.reset(new std::atomic<std::uint8_t>[nodes]);
  for (std::uint64_t i = 0; i < nodes; ++i) flags_[i].store(0, std::memory_order_relaxed);
  const std::uint64_t slots =
      std::clamp<std::uint64_t>(cfg_.brick_buffer_bytes / brick_bytes_, 1, std::uint64_t{kNoSlot} - 1);
  bricks_.reset(new std::byte[slots * brick_bytes_]);
  slots_.resize(slots);
  free_slots_.reserve(slots);
  for (std::uint64_t s = slots; s-- > 0;) free_slots_.push_back(static_cast<std::uint32_t>(s));
  for (std::uint64_t i : tree.node_indices()) entries_[i] = entry_from_tree(i);
}

std::uint64_t DeviceState::entry_from_tree(std::uint64_t node) const {
  const auto info = tree_.node(node);
  if (!info) return 0;
  NodeState s;
  s.not_homogeneous = info->has_brick() && !info->homogeneous;
  s.child_pointer = info->has_children ? static_cast<std::uint32_t>(node + 1) : 0;
  s.avg = info->avg;
  return codec_.pack(s);
}

void DeviceState::release_slot_of(std::uint64_t node) {
  const std::uint64_t e = entries_[node];
  if (!NodeCodec::in_buffer(e)) return;
  const std::uint32_t s = NodeCodec::slot(e);
  slots_[s] = Slot{};
  free_slots_.push_back(s);
  std::sort(free_slots_.begin(), free_slots_.end(), std::greater<>());
  ++total_evictions_;
}

void DeviceState::refresh(std::uint64_t node, bool keep_brick) {
  const std::uint64_t old = entries_[node];
  std::uint64_t e = entry_from_tree(node);
  if (keep_brick && NodeCodec::in_buffer(old) && NodeCodec::not_homogeneous(e)) {
    e = (e & kSlotMask) | 1u | (std::uint64_t{NodeCodec::slot(old)} << 24);
  } else {
    release_slot_of(node);
  }
  entries_[node] = e;
}

void DeviceState::apply_events(std::span<const core::ChangeEvent> events) {
  for (const core::ChangeEvent& ev : events) {
    if (ev.node >= entries_.size()) throw BoundsError("change event references node " + std::to_string(ev.node));
    switch (ev.kind) {
      case core::EventKind::NodeCreated:
        release_slot_of(ev.node);
        entries_[ev.node] = entry_from_tree(ev.node);
        if (ev.node > 0) refresh(core::parent_index(ev.node), true);
        break;
      case core::EventKind::NodeDeleted:
        release_slot_of(ev.node);
        entries_[ev.node] = entry_from_tree(ev.node);
        if (ev.node > 0) refresh(core::parent_index(ev.node), true);
        break;
      case core::EventKind::NodeUpdated:
        refresh(ev.node, false);
        break;
    }
  }
}

void DeviceState::sync() {
  const std::vector<core::ChangeEvent> ev = const_cast<core::Octree&>(tree_).drain_events();
  apply_events(ev);
}

void DeviceState::clear_flags() {
  for (std::uint64_t i = 0; i < entries_.size(); ++i) flags_[i].store(0, std::memory_order_relaxed);
}

UploadPlan DeviceState::process_flags(Strategy strategy) {
  const auto& L = layout();
  std::vector<std::uint64_t> requests;
  for (std::uint64_t i = 0; i < entries_.size(); ++i)
    if (flags_[i].load(std::memory_order_relaxed) & kFlagRequested) requests.push_back(i);
  requests.insert(requests.end(), carried_.begin(), carried_.end());
  carried_.clear();
  std::sort(requests.begin(), requests.end());
  requests.erase(std::unique(requests.begin(), requests.end()), requests.end());
  // Only absent bricks of non-homogeneous nodes can be uploaded.
  std::erase_if(requests, [&](std::uint64_t i) {
    const std::uint64_t e = entries_[i];
    return NodeCodec::in_buffer(e) || !NodeCodec::not_homogeneous(e);
  });

  for (Slot& s : slots_) s.used = s.owner != kNoOwner && (flags_[s.owner].load(std::memory_order_relaxed) & kFlagUsed);

  std::unordered_map<std::uint64_t, std::uint64_t> ages;
  for (std::uint64_t r : requests) {
    auto it = request_age_.find(r);
    ages[r] = it == request_age_.end() ? 0 : it->second + 1;
  }
  request_age_ = ages;
  std::sort(requests.begin(), requests.end(), [&](std::uint64_t a, std::uint64_t b) {
    const int la = L.level_of_index(a), lb = L.level_of_index(b);
    if (la != lb) return la > lb;
    if (ages[a] != ages[b]) return ages[a] > ages[b];
    return a < b;
  });

  std::vector<std::uint32_t> open(free_slots_.rbegin(), free_slots_.rend());
  std::vector<std::uint32_t> used;
  for (std::uint32_t s = 0; s < slots_.size(); ++s) {
    if (slots_[s].owner == kNoOwner) continue;
    (slots_[s].used ? used : open).push_back(s);
  }

  UploadPlan plan;
  auto item = [&](std::uint64_t r, std::uint32_t slot) {
    return UploadItem{r, L.level_of_index(r), slot, slots_[slot].owner, ages[r]};
  };
  if (strategy == Strategy::Refinement) {
    open.insert(open.end(), used.begin(), used.end());
    std::size_t k = 0;
    for (std::uint64_t r : requests) {
      if (k < open.size()) {
        plan.items.push_back(item(r, open[k++]));
      } else {
        plan.deferred.push_back(r);
      }
    }
  } else {
    // Coarser requests may replace used, strictly finer bricks, but only for requests beyond the open slots.
    std::size_t excess = requests.size() > open.size() ? requests.size() - open.size() : 0;
    std::vector<std::optional<std::uint32_t>> evict(requests.size());
    for (std::size_t k = 0; k < requests.size() && excess > 0; ++k) {
      const int level = L.level_of_index(requests[k]);
      auto best = used.end();
      for (auto it = used.begin(); it != used.end(); ++it) {
        const int ol = L.level_of_index(slots_[*it].owner);
        if (ol < level && (best == used.end() || ol < L.level_of_index(slots_[*best].owner))) best = it;
      }
      if (best == used.end()) continue;
      evict[k] = *best;
      used.erase(best);
      --excess;
    }
    std::size_t next = 0;
    for (std::size_t k = 0; k < requests.size(); ++k) {
      if (evict[k]) {
        plan.items.push_back(item(requests[k], *evict[k]));
      } else if (next < open.size()) {
        plan.items.push_back(item(requests[k], open[next++]));
      } else {
        plan.deferred.push_back(requests[k]);
      }
    }
  }
  clear_flags();
  return plan;
}

FetchResult DeviceState::fetch_from_tree(std::uint64_t node, std::span<std::byte> dst, bool& border_valid) const {
  if (tree_.copy_brick(node, dst, store::Wait::NonBlocking, &border_valid)) return FetchResult::Done;
  const auto info = tree_.node(node);
  return info && info->has_brick() ? FetchResult::Unavailable : FetchResult::Missing;
}

UploadReport DeviceState::upload(const UploadPlan& plan) {
  SteadyClock clock;
  return upload(plan, clock, [this](std::uint64_t n, std::span<std::byte> d, bool& bv) {
    return fetch_from_tree(n, d, bv);
  });
}

UploadReport DeviceState::upload(const UploadPlan& plan, Clock& clock, const BrickFetcher& fetch) {
  UploadReport r;
  const double start = clock.now_ms();
  std::vector<std::byte> scratch(brick_bytes_);
  for (std::size_t k = 0; k < plan.items.size(); ++k) {
    const UploadItem& it = plan.items[k];
    if (clock.now_ms() - start >= cfg_.upload_budget_ms) {
      for (std::size_t j = k; j < plan.items.size(); ++j) carried_.push_back(plan.items[j].node);
      r.deferred = plan.items.size() - k;
      break;
    }
    const std::uint64_t e = entries_[it.node];
    if (NodeCodec::in_buffer(e) || !NodeCodec::not_homogeneous(e)) {
      ++r.dropped;
      continue;
    }
    bool border_valid = false;
    const FetchResult f = fetch(it.node, scratch, border_valid);
    if (f == FetchResult::Unavailable) {
      carried_.push_back(it.node);
      ++r.unavailable;
      continue;
    }
    if (f == FetchResult::Missing) {
      ++r.dropped;
      continue;
    }
    // The slot may have been released by an event or by an earlier item; take whatever sits there out first.
    const std::uint64_t owner = slots_[it.slot].owner;
    if (owner != kNoOwner) {
      entries_[owner] = entry_from_tree(owner);
      slots_[it.slot] = Slot{};
      ++total_evictions_;
    } else {
      std::erase(free_slots_, it.slot);
    }
    std::memcpy(bricks_.get() + std::size_t{it.slot} * brick_bytes_, scratch.data(), brick_bytes_);
    slots_[it.slot] = Slot{it.node, false, border_valid};
    request_age_.erase(it.node);
    // The in-buffer flag goes up last.
    entries_[it.node] = (entries_[it.node] & kSlotMask) | 1u | (std::uint64_t{it.slot} << 24);
    ++r.uploaded;
    ++total_uploads_;
  }
  r.elapsed_ms = clock.now_ms() - start;
  return r;
}

std::uint32_t DeviceState::occupied_slots() const {
  return static_cast<std::uint32_t>(slots_.size() - free_slots_.size());
}

bool DeviceState::consistent() const {
  std::uint64_t occupied = 0;
  for (std::uint32_t s = 0; s < slots_.size(); ++s) {
    const std::uint64_t o = slots_[s].owner;
    if (o == kNoOwner) continue;
    ++occupied;
    if (o >= entries_.size()) return false;
    const std::uint64_t e = entries_[o];
    if (!NodeCodec::in_buffer(e) || NodeCodec::slot(e) != s) return false;
  }
  std::uint64_t flagged = 0;
  for (std::uint64_t e : entries_)
    if (NodeCodec::in_buffer(e)) ++flagged;
  return flagged == occupied && occupied + free_slots_.size() == slots_.size();
}

void DeviceState::evict_all() {
  for (std::uint32_t s = 0; s < slots_.size(); ++s) {
    const std::uint64_t o = slots_[s].owner;
    if (o == kNoOwner) continue;
    entries_[o] = entry_from_tree(o);
    slots_[s] = Slot{};
    free_slots_.push_back(s);
    ++total_evictions_;
  }
  std::sort(free_slots_.begin(), free_slots_.end(), std::greater<>());
}

void DeviceState::dump_node_buffer(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(entries_.data()), static_cast<std::streamsize>(entries_.size() * 8));
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace voxstream::device
