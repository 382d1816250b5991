// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/render/camera.hpp"

namespace voxstream::render {

void Camera::validate() const {
  if (width < 1 || height < 1) throw ConfigError("viewport must be at least 1x1");
  if (!(fov_y > 0.0 && fov_y < 3.1)) throw ConfigError("field of view must lie in (0, 3.1) radians");
  const Vec3d f = look_at - position;
  if (length(f) < 1e-12) throw ConfigError("camera position equals look-at point");
  if (length(cross(f, up)) < 1e-12 * length(f) * std::max(length(up), 1e-300))
    throw ConfigError("camera up vector is parallel to the view direction");
}

Vec3d Camera::forward() const { return normalize(look_at - position); }
Vec3d Camera::right() const { return normalize(cross(forward(), up)); }
Vec3d Camera::true_up() const { return cross(right(), forward()); }

Ray Camera::ray(int x, int y) const {
  const Vec3d f = forward(), r = right(), u = true_up();
  const double half_h = std::tan(fov_y / 2.0);
  const double half_w = half_h * double(width) / double(height);
  const double sx = ((double(x) + 0.5) / double(width) * 2.0 - 1.0) * half_w;
  const double sy = (1.0 - (double(y) + 0.5) / double(height) * 2.0) * half_h;
  return {position, normalize(f + r * sx + u * sy)};
}

double Camera::pixel_size_at(double depth) const { return 2.0 * depth * std::tan(fov_y / 2.0) / double(height); }

double Camera::depth_of(const Vec3d& p) const { return dot(p - position, forward()); }

Camera Camera::orbit(const Vec3d& centre, double radius, double azimuth, double elevation, int width, int height,
                     double fov_y) {
  Camera c;
  const Vec3d offset{radius * std::cos(elevation) * std::sin(azimuth), radius * std::sin(elevation),
                     -radius * std::cos(elevation) * std::cos(azimuth)};
  c.position = centre + offset;
  c.look_at = centre;
  c.up = {0, 1, 0};
  c.fov_y = fov_y;
  c.width = width;
  c.height = height;
  return c;
}

}  // namespace voxstream::render
