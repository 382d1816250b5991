// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <cstring>
#include <fstream>

#include "voxstream/common/bytes.hpp"
#include "voxstream/core/octree.hpp"

namespace voxstream::core {

namespace {

constexpr std::uint32_t kTreeVersion = 1;

enum NodeFlags : std::uint8_t {
  kHasChildren = 1,
  kHasBrick = 2,
  kTouched = 4,
  kBorderValid = 8,
  kHasKnownMask = 16,
};

std::uint32_t crc_of(std::span<const std::byte> b) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(b.data()),
                                          static_cast<uInt>(b.size())));
}

// Writes to a sibling temp file, syncs, then renames over the target.
void write_atomically(const std::filesystem::path& target, std::span<const std::byte> bytes) {
  const std::filesystem::path tmp = target.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw IoError("cannot write " + tmp.string() + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t w = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (w < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw IoError("write failed for " + tmp.string());
    }
    done += static_cast<std::size_t>(w);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    throw IoError("fsync failed for " + tmp.string());
  }
  ::close(fd);
  std::filesystem::rename(tmp, target);
}

std::vector<std::byte> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> buf(size);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("cannot read " + p.string());
  return buf;
}

}  // namespace

void Octree::save(const std::filesystem::path& dir) const {
  std::shared_lock lock(tree_mutex_);
  std::filesystem::create_directories(dir);

  std::uint64_t brick_count = 0;
  for (const auto& [i, n] : nodes_)
    if (n.brick) ++brick_count;
  // Capacity covers the largest possible tree so a reopened store can keep growing.
  const std::uint64_t pages = std::max<std::uint64_t>((brick_count + cfg_.page_bricks - 1) / cfg_.page_bricks,
                                                      page_capacity_estimate());

  // Bricks are re-laid out in breadth-first order so the file does not depend on allocation history.
  const std::filesystem::path brick_path = dir / kBrickFile;
  const std::filesystem::path brick_tmp = brick_path.string() + ".tmp";
  std::map<std::uint64_t, store::BrickLocator> relocated;
  {
    auto out = store::BrickStore::create(brick_tmp, layout_.brick_bytes(), {cfg_.page_bricks, 2}, pages);
    for (const auto& [i, n] : nodes_) {
      if (!n.brick) continue;
      const store::BrickLocator dst = out->allocate_brick();
      store::BrickHandle src = store_->acquire(*n.brick, store::Access::Read);
      store::BrickHandle d = out->acquire(dst, store::Access::Write);
      std::memcpy(d.bytes().data(), src.bytes().data(), src.bytes().size());
      relocated[i] = dst;
    }
    out->flush();
  }
  std::filesystem::rename(brick_tmp, brick_path);

  ByteWriter w;
  w.put_magic("VXOC");
  w.put<std::uint32_t>(kTreeVersion);
  encode_descriptor(w, desc_);
  for (int a = 0; a < 3; ++a) w.put<std::uint32_t>(cfg_.brick_dims[a]);
  w.put<std::uint32_t>(cfg_.homogeneity_threshold);
  w.put<std::uint32_t>(cfg_.page_bricks);
  w.put<std::uint32_t>(cfg_.ram_page_limit);
  w.put<std::uint8_t>(finished_ ? 1 : 0);
  w.put<std::uint64_t>(nodes_.size());
  const int C = desc_.channels;
  for (const auto& [i, n] : nodes_) {
    std::uint8_t flags = 0;
    if (n.has_children) flags |= kHasChildren;
    if (n.brick) flags |= kHasBrick;
    if (n.touched) flags |= kTouched;
    if (n.border_valid) flags |= kBorderValid;
    if (!n.known.empty()) flags |= kHasKnownMask;
    w.put<std::uint64_t>(i);
    w.put<std::uint8_t>(flags);
    const store::BrickLocator loc = n.brick ? relocated.at(i) : store::BrickLocator{};
    w.put<std::uint32_t>(loc.page_id);
    w.put<std::uint32_t>(loc.slot);
    for (int c = 0; c < C; ++c) {
      w.put<std::uint16_t>(n.avg[c]);
      w.put<std::uint16_t>(n.bmin[c]);
      w.put<std::uint16_t>(n.bmax[c]);
      w.put<std::uint16_t>(n.rmin[c]);
      w.put<std::uint16_t>(n.rmax[c]);
    }
    w.put<std::uint64_t>(n.unknown);
    if (!n.known.empty()) {
      w.put<std::uint64_t>(n.known.size());
      for (std::uint64_t word : n.known) w.put<std::uint64_t>(word);
    }
  }
  w.put<std::uint32_t>(crc_of(w.bytes()));
  write_atomically(dir / kTreeFile, w.bytes());
}

std::unique_ptr<Octree> Octree::open(const std::filesystem::path& dir, std::optional<std::uint32_t> ram_page_limit) {
  const std::vector<std::byte> bytes = read_file(dir / kTreeFile);
  if (bytes.size() < 8) throw FormatError("tree file too short");
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  const std::span<const std::byte> body(bytes.data(), bytes.size() - 4);
  if (crc_of(body) != stored_crc) throw FormatError("tree file checksum mismatch");

  ByteReader r(body);
  if (!r.magic("VXOC")) throw FormatError("not a tree file");
  if (r.get<std::uint32_t>() != kTreeVersion) throw FormatError("unsupported tree file version");
  const VolumeDescriptor desc = decode_descriptor(r);
  BrickPoolConfig cfg;
  for (int a = 0; a < 3; ++a) cfg.brick_dims[a] = r.get<std::uint32_t>();
  cfg.homogeneity_threshold = r.get<std::uint32_t>();
  cfg.page_bricks = r.get<std::uint32_t>();
  cfg.ram_page_limit = r.get<std::uint32_t>();
  if (ram_page_limit) cfg.ram_page_limit = *ram_page_limit;
  cfg.validate(desc);
  const bool finished = r.get<std::uint8_t>() != 0;

  auto s = store::BrickStore::open(dir / kBrickFile, cfg.ram_page_limit);
  std::unique_ptr<Octree> t(new Octree(desc, cfg, std::move(s)));
  t->finished_ = finished;
  if (t->store_->brick_bytes() != t->layout_.brick_bytes()) throw FormatError("brick size mismatch between files");
  const std::uint64_t count = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint64_t index = r.get<std::uint64_t>();
    const std::uint8_t flags = r.get<std::uint8_t>();
    Node n;
    store::BrickLocator loc;
    loc.page_id = r.get<std::uint32_t>();
    loc.slot = r.get<std::uint32_t>();
    n.has_children = flags & kHasChildren;
    n.touched = flags & kTouched;
    n.border_valid = flags & kBorderValid;
    if (flags & kHasBrick) {
      if (!t->store_->is_allocated(loc)) throw FormatError("node references an unallocated brick");
      n.brick = loc;
    }
    for (int c = 0; c < desc.channels; ++c) {
      n.avg[c] = r.get<std::uint16_t>();
      n.bmin[c] = r.get<std::uint16_t>();
      n.bmax[c] = r.get<std::uint16_t>();
      n.rmin[c] = r.get<std::uint16_t>();
      n.rmax[c] = r.get<std::uint16_t>();
    }
    n.unknown = r.get<std::uint64_t>();
    if (flags & kHasKnownMask) {
      const std::uint64_t words = r.get<std::uint64_t>();
      if (words > r.remaining() / 8) throw FormatError("known mask exceeds the file");
      n.known.resize(words);
      for (auto& word : n.known) word = r.get<std::uint64_t>();
    }
    t->nodes_.emplace(index, std::move(n));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in tree file");
  if (t->nodes_.count(0) == 0) throw FormatError("tree file has no root");
  return t;
}

}  // namespace voxstream::core
