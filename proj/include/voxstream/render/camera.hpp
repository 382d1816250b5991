// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "voxstream/common/types.hpp"

namespace voxstream::render {

struct Ray {
  Vec3d origin;
  Vec3d dir;  // unit length
};

// Pinhole camera. Pixel (0, 0) is the top-left corner of the image.
struct Camera {
  Vec3d position{0, 0, -3};
  Vec3d look_at{0, 0, 0};
  Vec3d up{0, 1, 0};
  double fov_y = 0.6;  // radians
  int width = 256;
  int height = 256;

  // Throws ConfigError for degenerate setups.
  void validate() const;
  Vec3d forward() const;
  Vec3d right() const;
  Vec3d true_up() const;
  // Ray through the centre of pixel (x, y).
  Ray ray(int x, int y) const;
  // World extent of one pixel at view depth d.
  double pixel_size_at(double depth) const;
  double depth_of(const Vec3d& p) const;

  // Orbit position around centre: azimuth about +y, elevation above the xz plane; radians.
  static Camera orbit(const Vec3d& centre, double radius, double azimuth, double elevation, int width, int height,
                      double fov_y = 0.6);

  friend bool operator==(const Camera&, const Camera&) = default;
};

}  // namespace voxstream::render
