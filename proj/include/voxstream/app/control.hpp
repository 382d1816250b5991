// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "voxstream/core/volume.hpp"
#include "voxstream/render/raycaster.hpp"

namespace voxstream::app {

// Auto renders full-frame images while settings change and refines once they settle.
enum class StrategyPolicy { Auto, FullFrame, Refinement };

struct ViewState {
  render::Scene scene;
  StrategyPolicy policy = StrategyPolicy::Auto;
};

struct ControlResult {
  std::optional<std::int64_t> id;
  std::string type;
  bool ok = false;
  std::string error;
  bool view_changed = false;  // camera, TF, clip, mode, size or strategy
  bool reset = false;         // restart refinement with unchanged settings
  bool abort_ingest = false;
  bool wants_settings = false;
};

// Parses one JSON control message and applies it to the view; the view is untouched on error.
// Messages: {"id": n, "type": T, ...} with T one of
//   camera   {position?, look_at?, up?, fov?}         orbit    {azimuth, elevation, distance?}
//   tf       {channel, points: [[i, r, g, b, a], ...]} clip     {planes: [[nx, ny, nz, offset], ...]}
//   mode     {mode: "dvr" | "mip"}                     strategy {strategy: "auto" | "fullframe" | "refinement"}
//   resize   {width, height}                           reset, abort, settings
ControlResult apply_control(std::string_view text, ViewState& view, const core::VolumeDescriptor& desc);

// {"type": "ack" | "nack", "id": ..., "for": type, "error"?: ..., "settings"?: ...}
std::string control_reply(const ControlResult& r, const ViewState& view);
std::string settings_json(const ViewState& view);

struct ServiceStatus {
  std::uint64_t frame = 0;
  std::string phase;  // fullframe, refinement or idle
  double progress = 0.0;
  std::uint32_t bricks_resident = 0;
  bool refinement_complete = false;
  int refinement_passes = 0;
  std::string ingest = "none";  // none, running, finished, aborted
  std::uint64_t frames_dropped = 0;
};
std::string status_json(const ServiceStatus& s);

}  // namespace voxstream::app
