// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/render/transfer_function.hpp"

#include <algorithm>

namespace voxstream::render {

TransferFunction::TransferFunction() : TransferFunction(ramp({1, 1, 1, 1}).points_) {}

TransferFunction::TransferFunction(std::vector<ControlPoint> points) : points_(std::move(points)) {
  if (points_.size() < 2) throw ConfigError("a transfer function needs at least two control points");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const ControlPoint& p = points_[i];
    if (!(p.position >= 0.0 && p.position <= 1.0)) throw ConfigError("control point outside [0, 1]");
    if (i > 0 && p.position < points_[i - 1].position) throw ConfigError("control points must be sorted");
    for (double c : p.color)
      if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("control point colour outside [0, 1]");
  }
}

TransferFunction TransferFunction::ramp(const Rgba& color) {
  return TransferFunction({{0.0, {color[0], color[1], color[2], 0.0}}, {1.0, color}});
}

Rgba TransferFunction::operator()(double v) const {
  if (v <= points_.front().position) return points_.front().color;
  if (v >= points_.back().position) return points_.back().color;
  auto hi = std::upper_bound(points_.begin(), points_.end(), v,
                             [](double x, const ControlPoint& p) { return x < p.position; });
  auto lo = hi - 1;
  const double span = hi->position - lo->position;
  const double f = span > 0.0 ? (v - lo->position) / span : 1.0;
  Rgba out;
  for (int i = 0; i < 4; ++i) out[i] = lo->color[i] + f * (hi->color[i] - lo->color[i]);
  return out;
}

}  // namespace voxstream::render
