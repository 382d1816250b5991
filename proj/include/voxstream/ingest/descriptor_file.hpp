// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "voxstream/core/volume.hpp"

namespace voxstream::ingest {

// A raw volume on disk: samples x-fastest, then y, then z, little-endian.
struct RawVolumeSource {
  core::VolumeDescriptor descriptor;
  // One file per channel, or a single file with channels interleaved per voxel.
  std::vector<std::filesystem::path> files;
  bool interleaved = false;

  // Throws ConfigError for a bad file list and IoError when a file is missing or has the wrong size.
  void validate() const;
};

// Sidecar text format, one `key = value` per line, '#' starts a comment:
//   dims = X Y Z
//   channels = C
//   format = u8 | u16
//   spacing = sx sy sz
//   background = v
//   transform.<c>.<row> = m0 m1 m2 m3      (rows 0..3; unlisted channels stay identity)
//   data = file...                          (relative to the sidecar's directory)
//   layout = planar | interleaved
// Throws ConfigError.
RawVolumeSource parse_source(std::string_view text, const std::filesystem::path& base_dir = {});
RawVolumeSource read_source(const std::filesystem::path& sidecar);
core::VolumeDescriptor read_descriptor(const std::filesystem::path& sidecar);

std::string format_source(const RawVolumeSource& src, const std::filesystem::path& base_dir = {});
void write_source(const std::filesystem::path& sidecar, const RawVolumeSource& src);

}  // namespace voxstream::ingest
