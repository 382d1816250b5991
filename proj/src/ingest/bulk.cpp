// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/ingest/bulk.hpp"

#include <atomic>
#include <chrono>
#include <cstring>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

namespace voxstream::ingest {

std::string BuildReport::summary() const {
  std::ostringstream out;
  out << "time_s=" << seconds << " slabs=" << slabs << " nodes=" << stats.nodes << " bricks=" << stats.bricks
      << " pruned=" << stats.pruned << " payload_bytes=" << stats.payload_bytes << " raw_bytes=" << stats.raw_bytes
      << " payload_ratio=" << stats.payload_ratio();
  return out.str();
}

BuildReport ingest_bulk(const RawVolumeSource& source, core::Octree& tree, const BulkOptions& opt) {
  source.validate();
  const core::VolumeDescriptor& d = source.descriptor;
  const core::VolumeDescriptor& td = tree.descriptor();
  if (d.dims != td.dims || d.channels != td.channels || d.format != td.format)
    throw ConfigError("raw volume does not match the tree descriptor");

  const auto start = std::chrono::steady_clock::now();
  const std::uint32_t run = opt.slab_depth ? opt.slab_depth : tree.config().brick_dims.z;
  const std::size_t sb = sample_bytes(d.format);
  const std::size_t plane = std::size_t(d.dims.x) * d.dims.y;
  std::atomic<std::uint64_t> slabs{0};
  std::vector<std::exception_ptr> errors(std::size_t(d.channels));

  auto worker = [&](int c) {
    try {
      const auto& path = source.files[source.interleaved ? 0 : std::size_t(c)];
      std::ifstream in(path, std::ios::binary);
      if (!in) throw IoError("cannot open " + path.string());
      const std::size_t stride = source.interleaved ? std::size_t(d.channels) : 1;
      std::vector<std::byte> raw, mine;
      for (std::uint32_t z0 = 0; z0 < d.dims.z; z0 += run) {
        const std::uint32_t h = std::min(run, d.dims.z - z0);
        const std::size_t samples = plane * h;
        raw.resize(samples * sb * stride);
        in.seekg(static_cast<std::streamoff>(std::size_t(z0) * plane * sb * stride));
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (!in) throw IoError("short read from " + path.string());
        std::span<const std::byte> payload(raw);
        if (stride > 1) {
          mine.resize(samples * sb);
          for (std::size_t i = 0; i < samples; ++i)
            std::memcpy(mine.data() + i * sb, raw.data() + (i * stride + std::size_t(c)) * sb, sb);
          payload = mine;
        }
        tree.insert_block_bytes(c, {0, 0, z0}, {d.dims.x, d.dims.y, h}, payload);
        ++slabs;
      }
    } catch (...) {
      errors[std::size_t(c)] = std::current_exception();
    }
  };
  std::vector<std::thread> pool;
  for (int c = 0; c < d.channels; ++c) pool.emplace_back(worker, c);
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  if (opt.finish) {
    tree.mark_finished();
    tree.fill_borders();
  }
  BuildReport r;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.slabs = slabs;
  r.stats = tree.stats();
  return r;
}

}  // namespace voxstream::ingest
