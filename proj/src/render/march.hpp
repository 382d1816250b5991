// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Ray marching and compositing shared by the out-of-core renderer and the in-core oracle.

#include <algorithm>
#include <cmath>
#include <thread>
#include <vector>

#include "voxstream/core/volume.hpp"
#include "voxstream/render/raycaster.hpp"

namespace voxstream::render::detail {

enum class SampleStatus { Ok, Suspend };

struct MarchContext {
  const Scene* scene = nullptr;
  int channels = 1;
  double fmax = 65535.0;
  double step = 1.0;
  double alpha_exponent = 1.0;  // step / reference step
  Vec3d spacing{1, 1, 1};
  Vec3d box_hi{1, 1, 1};  // world extent of the volume
  bool transforms = false;
  std::array<Mat4, kMaxChannels> mats{};

  MarchContext(const Scene& s, const core::VolumeDescriptor& d) : scene(&s), channels(d.channels) {
    fmax = double(format_max(d.format));
    step = effective_step(s.settings, d.spacing);
    const double ref = s.settings.reference_step > 0.0 ? s.settings.reference_step : step;
    alpha_exponent = step / ref;
    spacing = d.spacing;
    for (int a = 0; a < 3; ++a) box_hi[a] = double(d.dims[a]) * d.spacing[a];
    transforms = d.has_channel_transforms();
    for (int c = 0; c < d.channels; ++c) mats[c] = d.transform(c);
  }

  bool inside(const Vec3d& p) const {
    for (int a = 0; a < 3; ++a)
      if (!(p[a] >= 0.0 && p[a] < box_hi[a])) return false;
    return true;
  }
  Vec3d to_voxel(const Vec3d& p) const { return {p.x / spacing.x, p.y / spacing.y, p.z / spacing.z}; }
};

inline void init_ray(RayState& s, const Ray& ray, const MarchContext& ctx) {
  s = RayState{};
  s.maxima.fill(-1.0);
  const auto bounds = compute_ray_bounds(ray, {0, 0, 0}, ctx.box_hi, ctx.scene->clips);
  if (!bounds) {
    s.finished = true;
    return;
  }
  s.hit = true;
  s.t = bounds->first + 0.5 * ctx.step;
  s.t_exit = bounds->second;
  if (s.t >= s.t_exit) s.finished = true;
}

inline void composite(RayState& s, const std::array<double, kMaxChannels>& v, const MarchContext& ctx,
                      std::uint64_t& tf_lookups) {
  if (ctx.scene->settings.mode == Mode::MIP) {
    for (int c = 0; c < ctx.channels; ++c) s.maxima[c] = std::max(s.maxima[c], v[c]);
    return;
  }
  tf_lookups += std::uint64_t(ctx.channels);
  double rgb[3] = {0, 0, 0};
  double transparency = 1.0;
  for (int c = 0; c < ctx.channels; ++c) {
    const Rgba tf = ctx.scene->tfs[c](v[c] / ctx.fmax);
    const double a = tf[3] >= 1.0 ? 1.0 : 1.0 - std::pow(1.0 - tf[3], ctx.alpha_exponent);
    for (int i = 0; i < 3; ++i) rgb[i] += tf[i] * a;
    transparency *= 1.0 - a;
  }
  const double alpha = 1.0 - transparency;
  const double remaining = 1.0 - s.color[3];
  for (int i = 0; i < 3; ++i) s.color[i] += remaining * std::min(1.0, rgb[i]);
  s.color[3] += remaining * alpha;
  if (s.color[3] >= ctx.scene->settings.early_termination) s.terminated = true;
}

inline void resolve_pixel(const RayState& s, const MarchContext& ctx, float* out) {
  if (ctx.scene->settings.mode == Mode::DVR) {
    for (int i = 0; i < 4; ++i) out[i] = static_cast<float>(s.color[i]);
    return;
  }
  double rgb[3] = {0, 0, 0};
  double transparency = 1.0;
  for (int c = 0; c < ctx.channels; ++c) {
    if (s.maxima[c] < 0.0) continue;
    const Rgba tf = ctx.scene->tfs[c](s.maxima[c] / ctx.fmax);
    for (int i = 0; i < 3; ++i) rgb[i] += tf[i] * tf[3];
    transparency *= 1.0 - tf[3];
  }
  for (int i = 0; i < 3; ++i) out[i] = static_cast<float>(std::min(1.0, rgb[i]));
  out[3] = static_cast<float>(1.0 - transparency);
}

// Transfer-function evaluations resolve_pixel performs for a finished ray.
inline std::uint64_t resolve_lookups(const RayState& s, const MarchContext& ctx) {
  if (ctx.scene->settings.mode == Mode::DVR) return 0;
  std::uint64_t n = 0;
  for (int c = 0; c < ctx.channels; ++c) n += s.maxima[c] >= 0.0;
  return n;
}

// Advances the ray until it finishes (true) or the sampler suspends it (false).
template <class Sampler>
bool march(RayState& s, const Ray& ray, const MarchContext& ctx, Sampler&& sample, std::uint64_t& tf_lookups) {
  std::array<double, kMaxChannels> v{};
  while (!s.finished) {
    if (s.t >= s.t_exit) {
      s.finished = true;
      break;
    }
    const Vec3d p = ray.origin + ray.dir * s.t;
    if (sample(p, v) == SampleStatus::Suspend) return false;
    composite(s, v, ctx, tf_lookups);
    if (s.terminated) {
      s.finished = true;
      break;
    }
    s.t += ctx.step;
  }
  return true;
}

// Trilinear interpolation around voxel-unit coordinate w (centres at integer + 0.5); fetch(i, j, k) reads a voxel.
template <class Fetch>
double trilinear(const Vec3d& w, Fetch&& fetch) {
  std::int64_t i0[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    const double x = w[a] - 0.5;
    const double fl = std::floor(x);
    i0[a] = static_cast<std::int64_t>(fl);
    f[a] = x - fl;
  }
  double acc = 0.0;
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i) {
        const double wt = (i ? f[0] : 1.0 - f[0]) * (j ? f[1] : 1.0 - f[1]) * (k ? f[2] : 1.0 - f[2]);
        if (wt == 0.0) continue;
        acc += wt * fetch(i0[0] + i, i0[1] + j, i0[2] + k);
      }
  return acc;
}

// Runs fn(y_begin, y_end, worker) over row bands.
template <class Fn>
void parallel_rows(int height, int threads, Fn&& fn) {
  int n = threads > 0 ? threads : int(std::max(1u, std::thread::hardware_concurrency()));
  n = std::clamp(n, 1, std::max(1, height));
  if (n == 1) {
    fn(0, height, 0);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < n; ++w) {
    const int y0 = height * w / n, y1 = height * (w + 1) / n;
    pool.emplace_back([&fn, y0, y1, w] { fn(y0, y1, w); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace voxstream::render::detail
