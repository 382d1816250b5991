// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "voxstream/core/volume.hpp"
#include "voxstream/render/raycaster.hpp"

namespace voxstream::app {

// Camera placement around the volume centre; distance 0 = twice the volume diagonal.
struct Orbit {
  double azimuth = 0.6;
  double elevation = 0.35;
  double distance = 0.0;
  friend bool operator==(const Orbit&, const Orbit&) = default;
};

// Render settings as stored in a settings file. Text format, one `key = value` per line:
//   width = 256            height = 256         fov = 0.6
//   camera.position = x y z   camera.look_at = x y z   camera.up = x y z   (else the orbit is used)
//   orbit = azimuth elevation distance
//   mode = dvr | mip       strategy = fullframe | refinement
//   step, reference_step, early_termination, lod_bias, threads = number
//   clip = nx ny nz offset                 (up to three lines)
//   tf.<channel> = intensity r g b a       (one control point per line, intensities ascending)
struct SettingsFile {
  render::Scene scene;  // tfs may list fewer channels than the volume has
  bool camera_given = false;
  Orbit orbit;

  friend bool operator==(const SettingsFile&, const SettingsFile&) = default;
};

// Throws ConfigError.
SettingsFile parse_settings(std::string_view text);
SettingsFile read_settings(const std::filesystem::path& path);
std::string format_settings(const SettingsFile& s);

render::Camera orbit_camera(const core::VolumeDescriptor& d, const Orbit& o, int width, int height, double fov_y);
// Default colours for channels without a transfer function.
render::TransferFunction default_transfer_function(int channel);
// Completes the scene for a concrete volume: orbit camera, missing transfer functions.
render::Scene resolve_scene(const SettingsFile& s, const core::VolumeDescriptor& d);

}  // namespace voxstream::app
