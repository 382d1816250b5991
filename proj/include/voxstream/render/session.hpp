// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>

#include "voxstream/device/device_state.hpp"
#include "voxstream/render/raycaster.hpp"

namespace voxstream::render {

struct FrameResult {
  Image image;          // full-frame image, or the progressive refinement image
  bool complete = false;  // refinement finished (full-frame: no brick was requested)
  PassStats stats;
  device::UploadReport upload;
  int passes = 0;  // refinement passes since the last restart
};

// Owns the device mirror of one tree and runs the render / evaluate / upload cycle.
class RenderSession {
 public:
  RenderSession(core::Octree& tree, device::DeviceConfig cfg);

  // Applies pending tree events, renders one pass with the scene's strategy, then evaluates the
  // flags and uploads within the budget. Tree changes restart refinement.
  FrameResult frame(const Scene& scene);
  // Applies pending tree events; true if there were any (refinement restarts).
  bool sync();
  // Repeats frame() until a pass requests nothing. Throws Error after max_passes.
  FrameResult render_complete(const Scene& scene, int max_passes = 100000);

  device::DeviceState& device() { return *device_; }
  const device::DeviceState& device() const { return *device_; }
  core::Octree& tree() { return tree_; }
  void set_clock(device::Clock* clock) { clock_ = clock; }
  void invalidate() { cache_ = RayCache{}; }

 private:
  core::Octree& tree_;
  std::unique_ptr<device::DeviceState> device_;
  Raycaster caster_;
  RayCache cache_;
  device::SteadyClock steady_;
  device::Clock* clock_ = &steady_;
};

}  // namespace voxstream::render
