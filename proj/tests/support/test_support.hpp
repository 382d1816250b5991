// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdlib.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "voxstream/core/octree.hpp"

namespace voxstream::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "voxstream-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::byte> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<std::byte>(raw[i]);
  return out;
}

// Dense multi-channel level-0 volume, one x-fastest array per channel.
struct DenseVolume {
  Vec3u dims{};
  int channels = 1;
  std::vector<std::vector<std::uint16_t>> data;

  std::uint16_t at(int c, std::uint64_t x, std::uint64_t y, std::uint64_t z) const {
    return data[std::size_t(c)][(z * dims.y + y) * dims.x + x];
  }
  std::vector<std::uint16_t> block(int c, const Vec3u& o, const Vec3u& d) const {
    std::vector<std::uint16_t> out;
    out.reserve(voxel_count(d));
    for (std::uint32_t z = 0; z < d.z; ++z)
      for (std::uint32_t y = 0; y < d.y; ++y)
        for (std::uint32_t x = 0; x < d.x; ++x) out.push_back(at(c, o.x + x, o.y + y, o.z + z));
    return out;
  }
};

inline DenseVolume random_volume(const Vec3u& dims, int channels, std::uint32_t max_value, std::uint64_t seed) {
  DenseVolume v{dims, channels, {}};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> dist(0, max_value);
  for (int c = 0; c < channels; ++c) {
    std::vector<std::uint16_t> ch(voxel_count(dims));
    for (auto& s : ch) s = static_cast<std::uint16_t>(dist(rng));
    v.data.push_back(std::move(ch));
  }
  return v;
}

// Smooth random field: sum of a few blobs plus low noise, so rendered images have structure.
inline DenseVolume blob_volume(const Vec3u& dims, int channels, std::uint32_t max_value, std::uint64_t seed) {
  DenseVolume v{dims, channels, {}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int c = 0; c < channels; ++c) {
    std::vector<std::uint16_t> ch(voxel_count(dims));
    struct Blob {
      double x, y, z, r, a;
    };
    std::vector<Blob> blobs;
    for (int b = 0; b < 4; ++b)
      blobs.push_back({u(rng) * dims.x, u(rng) * dims.y, u(rng) * dims.z, (0.1 + 0.25 * u(rng)) * dims.x, u(rng)});
    std::size_t i = 0;
    for (std::uint32_t z = 0; z < dims.z; ++z)
      for (std::uint32_t y = 0; y < dims.y; ++y)
        for (std::uint32_t x = 0; x < dims.x; ++x, ++i) {
          double s = 0.05 * u(rng);
          for (const Blob& b : blobs) {
            const double dx = x - b.x, dy = y - b.y, dz = z - b.z;
            s += b.a * std::exp(-(dx * dx + dy * dy + dz * dz) / (b.r * b.r));
          }
          ch[i] = static_cast<std::uint16_t>(std::min(1.0, s) * max_value);
        }
    v.data.push_back(std::move(ch));
  }
  return v;
}

inline void insert_whole(core::Octree& t, const DenseVolume& v) {
  for (int c = 0; c < v.channels; ++c) t.insert_block(c, {0, 0, 0}, v.dims, v.data[std::size_t(c)]);
}

// Brute-force mipmap: level L value = round-half-up mean of the in-volume 2x2x2 block of level L-1.
// Independent of bricks and octree addressing.
struct ReferencePyramid {
  std::vector<Vec3u> dims;  // per level, in-volume voxel extents
  std::vector<std::vector<std::vector<std::uint16_t>>> levels;  // [level][channel][voxel]

  ReferencePyramid(const DenseVolume& v, int depth, std::array<bool, 3> flat) {
    dims.push_back(v.dims);
    levels.push_back(v.data);
    for (int l = 1; l <= depth; ++l) {
      const Vec3u pd = dims.back();
      Vec3u d;
      for (int a = 0; a < 3; ++a) d[a] = flat[a] ? pd[a] : (pd[a] + 1) / 2;
      std::vector<std::vector<std::uint16_t>> lvl(std::size_t(v.channels), std::vector<std::uint16_t>(voxel_count(d)));
      for (int c = 0; c < v.channels; ++c) {
        const auto& src = levels.back()[std::size_t(c)];
        for (std::uint32_t z = 0; z < d.z; ++z)
          for (std::uint32_t y = 0; y < d.y; ++y)
            for (std::uint32_t x = 0; x < d.x; ++x) {
              std::uint64_t sum = 0, n = 0;
              const std::uint32_t f[3] = {flat[0] ? 1u : 2u, flat[1] ? 1u : 2u, flat[2] ? 1u : 2u};
              for (std::uint32_t k = 0; k < f[2]; ++k)
                for (std::uint32_t j = 0; j < f[1]; ++j)
                  for (std::uint32_t i = 0; i < f[0]; ++i) {
                    const std::uint64_t sx = std::uint64_t(x) * f[0] + i, sy = std::uint64_t(y) * f[1] + j,
                                        sz = std::uint64_t(z) * f[2] + k;
                    if (sx >= pd.x || sy >= pd.y || sz >= pd.z) continue;
                    sum += src[(sz * pd.y + sy) * pd.x + sx];
                    ++n;
                  }
              lvl[std::size_t(c)][(std::uint64_t(z) * d.y + y) * d.x + x] =
                  static_cast<std::uint16_t>((2 * sum + n) / (2 * n));
            }
      }
      dims.push_back(d);
      levels.push_back(std::move(lvl));
    }
  }

  std::uint16_t at(int level, int c, std::uint64_t x, std::uint64_t y, std::uint64_t z) const {
    const Vec3u d = dims[std::size_t(level)];
    return levels[std::size_t(level)][std::size_t(c)][(z * d.y + y) * d.x + x];
  }
};

}  // namespace voxstream::testing
