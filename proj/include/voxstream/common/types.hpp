// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

static_assert(std::endian::native == std::endian::little,
              "voxstream stores multi-byte samples in host order and requires a little-endian host");

namespace voxstream {

inline constexpr int kMaxChannels = 4;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid descriptor or configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Block, channel, or index outside the permitted range.
class BoundsError : public Error {
 public:
  using Error::Error;
};

// Disk read/write failure or on-disk corruption.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed wire or file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

enum class SampleFormat : std::uint8_t { U8 = 1, U16 = 2 };

constexpr std::size_t sample_bytes(SampleFormat f) { return f == SampleFormat::U8 ? 1 : 2; }
constexpr std::uint32_t format_max(SampleFormat f) { return f == SampleFormat::U8 ? 0xFFu : 0xFFFFu; }

inline const char* format_name(SampleFormat f) { return f == SampleFormat::U8 ? "u8" : "u16"; }

// Calls fn.template operator()<T>() with T the storage type of the format.
template <class Fn>
decltype(auto) with_sample_type(SampleFormat f, Fn&& fn) {
  if (f == SampleFormat::U8) return fn.template operator()<std::uint8_t>();
  return fn.template operator()<std::uint16_t>();
}

template <class T>
struct Vec3 {
  T x{}, y{}, z{};

  constexpr T& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr const T& operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(T s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(T s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3 mul(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
  constexpr Vec3 div(const Vec3& o) const { return {x / o.x, y / o.y, z / o.z}; }

  constexpr T product() const { return x * y * z; }
};

using Vec3u = Vec3<std::uint32_t>;
using Vec3i = Vec3<std::int64_t>;
using Vec3d = Vec3<double>;

inline double dot(const Vec3d& a, const Vec3d& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3d cross(const Vec3d& a, const Vec3d& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double length(const Vec3d& a) { return std::sqrt(dot(a, a)); }
inline Vec3d normalize(const Vec3d& a) {
  const double l = length(a);
  return l > 0 ? a / l : a;
}

inline std::uint64_t voxel_count(const Vec3u& d) {
  return std::uint64_t{d.x} * std::uint64_t{d.y} * std::uint64_t{d.z};
}

// Half-open box of integer voxel coordinates.
struct Box3 {
  Vec3i lo{}, hi{};

  bool empty() const { return lo.x >= hi.x || lo.y >= hi.y || lo.z >= hi.z; }
  std::uint64_t volume() const {
    return empty() ? 0 : std::uint64_t(hi.x - lo.x) * std::uint64_t(hi.y - lo.y) * std::uint64_t(hi.z - lo.z);
  }
  Box3 intersect(const Box3& o) const {
    Box3 r;
    for (int a = 0; a < 3; ++a) {
      r.lo[a] = std::max(lo[a], o.lo[a]);
      r.hi[a] = std::min(hi[a], o.hi[a]);
    }
    return r;
  }
  friend bool operator==(const Box3&, const Box3&) = default;
};

// Per-channel intensities. Unused trailing channels stay zero.
using ChannelValues = std::array<std::uint16_t, kMaxChannels>;

}  // namespace voxstream
