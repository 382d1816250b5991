// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "voxstream/device/device_state.hpp"
#include "voxstream/render/camera.hpp"
#include "voxstream/render/transfer_function.hpp"

namespace voxstream::render {

enum class Mode { DVR, MIP };

struct RenderSettings {
  Mode mode = Mode::DVR;
  device::Strategy strategy = device::Strategy::FullFrame;
  double step = 0.0;            // world units; 0 = half the smallest voxel spacing
  double reference_step = 0.0;  // opacity-correction reference; 0 = same as step
  double early_termination = 0.99;
  double lod_bias = 0.0;
  int threads = 0;  // 0 = hardware concurrency

  friend bool operator==(const RenderSettings&, const RenderSettings&) = default;
};

// Half-space dot(normal, p) >= offset is kept (world coordinates).
struct ClipPlane {
  Vec3d normal{1, 0, 0};
  double offset = 0.0;
  bool keeps(const Vec3d& p) const { return dot(normal, p) >= offset; }
  friend bool operator==(const ClipPlane&, const ClipPlane&) = default;
};

inline constexpr int kMaxClipPlanes = 3;

struct Scene {
  Camera camera;
  std::vector<TransferFunction> tfs;  // one per channel
  std::vector<ClipPlane> clips;
  RenderSettings settings;

  // Throws ConfigError.
  void validate(int channels) const;
  friend bool operator==(const Scene&, const Scene&) = default;
};

// Float RGBA image, row-major from the top-left, premultiplied alpha.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> rgba;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgba(std::size_t(w) * std::size_t(h) * 4, 0.0f) {}
  float* pixel(int x, int y) { return rgba.data() + (std::size_t(y) * std::size_t(width) + std::size_t(x)) * 4; }
  const float* pixel(int x, int y) const {
    return rgba.data() + (std::size_t(y) * std::size_t(width) + std::size_t(x)) * 4;
  }
  std::vector<std::uint8_t> to_rgba8() const;
};

// Largest per-component difference; images must have equal size.
double max_abs_diff(const Image& a, const Image& b);

// Suspended state of one ray between refinement passes.
struct RayState {
  double t = 0.0;
  double t_exit = 0.0;
  std::array<double, 4> color{};   // premultiplied RGBA (DVR)
  std::array<double, 4> maxima{};  // per-channel maxima in sample units (MIP); -1 = none yet
  bool hit = false;
  bool terminated = false;  // early termination
  bool finished = false;    // reached the exit point or terminated
};

struct PassStats {
  std::uint64_t samples = 0;
  std::uint64_t brick_samples = 0;
  std::uint64_t avg_samples = 0;       // homogeneous nodes
  std::uint64_t coarse_fallbacks = 0;  // full-frame: a coarser resident brick stood in
  std::uint64_t avg_fallbacks = 0;     // full-frame: no resident brick within two levels
  std::uint64_t suspended_rays = 0;    // refinement
  std::uint64_t requests = 0;          // absent-brick encounters
  std::uint64_t tf_lookups = 0;        // transfer-function evaluations, per channel
  PassStats& operator+=(const PassStats& o);
};

// Per-pixel ray states for progressive refinement; invalid after any scene change.
class RayCache {
 public:
  bool valid_for(const Scene& s) const { return initialized_ && scene_ == s; }
  // fmax: largest sample value of the volume format.
  void reset(const Scene& s, double fmax);
  std::vector<RayState>& states() { return states_; }
  const std::vector<RayState>& states() const { return states_; }
  const Scene& scene() const { return scene_; }
  int passes() const { return passes_; }
  void count_pass() { ++passes_; }
  // Current accumulated image (unfinished rays included).
  Image image() const;

 private:
  bool initialized_ = false;
  Scene scene_;
  std::vector<RayState> states_;
  int passes_ = 0;
  double fmax_ = 65535.0;
};

// Parametric interval of the ray inside the box [lo, hi] intersected with the clip half-spaces.
std::optional<std::pair<double, double>> compute_ray_bounds(const Ray& ray, const Vec3d& lo, const Vec3d& hi,
                                                            const std::vector<ClipPlane>& clips);

// Coarsest level whose voxels project to at most one pixel (scaled by 2^lod_bias), clamped to [0, depth].
int optimal_lod(const Vec3d& world, const Camera& camera, const RenderSettings& s, double finest_spacing, int depth);

struct NodeRef {
  std::uint64_t index = 0;
  int level = 0;
  Vec3u grid{};
};

// Descends the node buffer towards `target` level; `voxel` is in level-0 voxel units.
NodeRef lookup_node(const device::DeviceState& ds, const Vec3d& voxel, int target);

// Sampling step actually used for a scene over a volume.
double effective_step(const RenderSettings& s, const Vec3d& spacing);

class Raycaster {
 public:
  explicit Raycaster(const device::DeviceState& ds) : ds_(ds) {}

  // One complete image; absent bricks fall back to coarser resident bricks, else AVG.
  Image render_fullframe(const Scene& scene, PassStats* stats = nullptr) const;
  // Advances every unfinished ray. True iff no brick was requested during the pass.
  bool render_refinement_pass(const Scene& scene, RayCache& cache, PassStats* stats = nullptr) const;

 private:
  const device::DeviceState& ds_;
};

// In-core reference volume: one x-fastest array per channel in sample units.
struct InCoreVolume {
  core::VolumeDescriptor desc;
  std::vector<std::vector<std::uint16_t>> channels;
};

// Brute-force ray caster over level-0 data with the same sampling and compositing contract.
Image render_oracle(const InCoreVolume& volume, const Scene& scene);

}  // namespace voxstream::render
