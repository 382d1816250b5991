// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "voxstream/common/types.hpp"

namespace voxstream {

// Row-major 4x4 matrix acting on column vectors (p' = M * [p, 1]).
class Mat4 {
 public:
  constexpr Mat4() : m_{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1} {}
  explicit constexpr Mat4(const std::array<double, 16>& m) : m_(m) {}

  static Mat4 identity() { return Mat4(); }
  static Mat4 translation(const Vec3d& t);
  static Mat4 scaling(const Vec3d& s);

  double operator()(int row, int col) const { return m_[row * 4 + col]; }
  double& operator()(int row, int col) { return m_[row * 4 + col]; }
  const std::array<double, 16>& values() const { return m_; }

  Vec3d transform_point(const Vec3d& p) const;
  Mat4 operator*(const Mat4& o) const;

  double determinant() const;
  bool is_identity() const;
  // Throws ConfigError for singular matrices.
  Mat4 inverse() const;

  friend bool operator==(const Mat4&, const Mat4&) = default;

 private:
  std::array<double, 16> m_;
};

}  // namespace voxstream
