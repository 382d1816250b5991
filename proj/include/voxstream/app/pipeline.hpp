// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "voxstream/core/octree.hpp"
#include "voxstream/device/device_state.hpp"
#include "voxstream/ingest/bulk.hpp"
#include "voxstream/render/raycaster.hpp"

namespace voxstream::app {

// Builds a store directory (octree + brick pool files) from a raw volume.
ingest::BuildReport build_store(const ingest::RawVolumeSource& source, const core::BrickPoolConfig& cfg,
                                const std::filesystem::path& out_dir, std::uint32_t slab_depth = 0);

struct RenderRun {
  render::Image fullframe;  // the first, approximate image
  render::Image image;      // completed refinement
  int passes = 0;           // refinement passes
  std::uint64_t uploads = 0;
  std::uint64_t page_faults = 0;
  std::uint64_t tf_lookups = 0;  // during refinement
  double seconds = 0.0;
  std::string summary() const;
};

// One full-frame pass, then refinement until a pass requests nothing.
RenderRun render_store(core::Octree& tree, const render::Scene& scene, const device::DeviceConfig& cfg,
                       int max_passes = 100000);

struct BenchOptions {
  int frames = 100;           // per revolution
  int warmup_revolutions = 1;  // revolutions rendered before measuring
  Vec3d centre{};
  double distance = 0.0;
  double elevation = 0.35;
  bool keep_images = false;
};

struct BenchReport {
  int frames = 0;
  double mean_ms = 0.0, p50_ms = 0.0, p95_ms = 0.0, p99_ms = 0.0, max_ms = 0.0;
  std::uint64_t avg_fallbacks = 0;     // measured revolution
  std::uint64_t coarse_fallbacks = 0;  // measured revolution
  std::uint64_t uploads = 0;           // measured revolution
  std::uint64_t warmup_uploads = 0;
  std::uint64_t evictions = 0;  // measured revolution
  std::uint64_t page_faults = 0;  // whole run
  std::vector<std::uint64_t> frame_avg_fallbacks;
  std::vector<render::Image> images;  // measured frames when requested
  std::string summary() const;
};

// Full-frame 360 degree orbit about the y axis; the scene supplies image size, TFs, clips and settings.
BenchReport run_bench(core::Octree& tree, const render::Scene& scene, const device::DeviceConfig& cfg,
                      const BenchOptions& opt);

}  // namespace voxstream::app
