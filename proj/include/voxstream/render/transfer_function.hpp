// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "voxstream/common/types.hpp"

namespace voxstream::render {

using Rgba = std::array<double, 4>;

struct ControlPoint {
  double position = 0.0;  // normalized intensity in [0, 1]
  Rgba color{};           // unit-interval components, not premultiplied

  friend bool operator==(const ControlPoint&, const ControlPoint&) = default;
};

// Piecewise-linear RGBA lookup over the normalized intensity domain; constant beyond the end points.
class TransferFunction {
 public:
  TransferFunction();
  // Throws ConfigError unless there are >= 2 points with non-decreasing positions in [0, 1].
  explicit TransferFunction(std::vector<ControlPoint> points);

  // Transparent at 0 rising linearly to `color` at full intensity.
  static TransferFunction ramp(const Rgba& color);

  Rgba operator()(double normalized) const;
  const std::vector<ControlPoint>& points() const { return points_; }
  friend bool operator==(const TransferFunction&, const TransferFunction&) = default;

 private:
  std::vector<ControlPoint> points_;
};

}  // namespace voxstream::render
