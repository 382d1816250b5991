// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/render/raycaster.hpp"

#include <limits>

#include "march.hpp"

namespace voxstream::render {

using device::DeviceState;
using device::NodeCodec;

void Scene::validate(int channels) const {
  camera.validate();
  if (static_cast<int>(tfs.size()) != channels) throw ConfigError("expected one transfer function per channel");
  if (clips.size() > std::size_t(kMaxClipPlanes)) throw ConfigError("at most three clipping planes");
  for (const ClipPlane& c : clips)
    if (length(c.normal) < 1e-12) throw ConfigError("clip plane normal must be non-zero");
  if (!(settings.step >= 0.0)) throw ConfigError("sampling step must be positive");
  if (!(settings.reference_step >= 0.0)) throw ConfigError("reference step must be positive");
  if (!(settings.early_termination > 0.0 && settings.early_termination <= 1.0))
    throw ConfigError("early termination alpha must lie in (0, 1]");
}

std::vector<std::uint8_t> Image::to_rgba8() const {
  std::vector<std::uint8_t> out(rgba.size());
  for (std::size_t i = 0; i < rgba.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(rgba[i], 0.0f, 1.0f) * 255.0f));
  return out;
}

double max_abs_diff(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (std::size_t i = 0; i < a.rgba.size(); ++i) d = std::max(d, double(std::abs(a.rgba[i] - b.rgba[i])));
  return d;
}

PassStats& PassStats::operator+=(const PassStats& o) {
  samples += o.samples;
  brick_samples += o.brick_samples;
  avg_samples += o.avg_samples;
  coarse_fallbacks += o.coarse_fallbacks;
  avg_fallbacks += o.avg_fallbacks;
  suspended_rays += o.suspended_rays;
  requests += o.requests;
  tf_lookups += o.tf_lookups;
  return *this;
}

void RayCache::reset(const Scene& s, double fmax) {
  scene_ = s;
  fmax_ = fmax;
  initialized_ = true;
  passes_ = 0;
  states_.assign(std::size_t(s.camera.width) * std::size_t(s.camera.height), RayState{});
}

std::optional<std::pair<double, double>> compute_ray_bounds(const Ray& ray, const Vec3d& lo, const Vec3d& hi,
                                                            const std::vector<ClipPlane>& clips) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (ray.dir[a] == 0.0) {
      if (ray.origin[a] < lo[a] || ray.origin[a] > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - ray.origin[a]) / ray.dir[a];
    double tb = (hi[a] - ray.origin[a]) / ray.dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  for (const ClipPlane& c : clips) {
    // Kept where dot(n, o) + t dot(n, d) >= offset.
    const double nd = dot(c.normal, ray.dir);
    const double no = dot(c.normal, ray.origin) - c.offset;
    if (nd == 0.0) {
      if (no < 0.0) return std::nullopt;
      continue;
    }
    const double t = -no / nd;
    if (nd > 0.0) {
      t0 = std::max(t0, t);
    } else {
      t1 = std::min(t1, t);
    }
  }
  if (!(t0 < t1)) return std::nullopt;
  return std::make_pair(t0, t1);
}

int optimal_lod(const Vec3d& world, const Camera& camera, const RenderSettings& s, double finest_spacing, int depth) {
  const double depth_along = camera.depth_of(world);
  const double pixel = camera.pixel_size_at(std::max(depth_along, 0.0)) * std::exp2(s.lod_bias);
  if (!(pixel > finest_spacing)) return 0;
  const int level = static_cast<int>(std::floor(std::log2(pixel / finest_spacing)));
  return std::clamp(level, 0, depth);
}

double effective_step(const RenderSettings& s, const Vec3d& spacing) {
  if (s.step > 0.0) return s.step;
  return 0.5 * std::min({spacing.x, spacing.y, spacing.z});
}

NodeRef lookup_node(const DeviceState& ds, const Vec3d& voxel, int target) {
  const core::VolumeLayout& L = ds.layout();
  NodeRef r{0, L.depth(), {0, 0, 0}};
  while (r.level > target) {
    const std::uint32_t ptr = NodeCodec::child_pointer(ds.entry(r.index));
    if (ptr == 0) break;
    const int l = r.level - 1;
    const Vec3u gd = L.grid_dims(l);
    int octant = 0;
    Vec3u g{};
    for (int a = 0; a < 3; ++a) {
      const double extent = double(L.scale(l, a)) * double(L.brick_dims()[a]);
      const double cell = std::floor(voxel[a] / extent);
      g[a] = static_cast<std::uint32_t>(std::clamp(cell, 0.0, double(gd[a] - 1)));
      if (!L.flat(a) && (g[a] & 1u)) octant |= 1 << a;
    }
    r = {NodeCodec::first_child(ptr) + std::uint64_t(octant), l, g};
  }
  return r;
}

namespace {

// Samples one brick held in the brick buffer at level-0 voxel coordinate u.
template <class T>
double sample_brick(const DeviceState& ds, std::uint32_t slot, const NodeRef& n, const Vec3d& u, int c) {
  const core::VolumeLayout& L = ds.layout();
  const T* data = reinterpret_cast<const T*>(ds.slot_data(slot));
  const Vec3u m = L.brick_dims();
  Vec3d w;
  for (int a = 0; a < 3; ++a) w[a] = u[a] / double(L.scale(n.level, a)) - double(n.grid[a]) * double(m[a]);
  if (!ds.slot_border_valid(slot)) {
    // The border still holds background: stay within the interior voxel centres.
    for (int a = 0; a < 3; ++a) w[a] = std::clamp(w[a], 0.5, double(m[a]) - 0.5);
  }
  return detail::trilinear(w, [&](std::int64_t i, std::int64_t j, std::int64_t k) {
    return double(data[L.sample_index(i, j, k, c)]);
  });
}

double sample_slot(const DeviceState& ds, std::uint32_t slot, const NodeRef& n, const Vec3d& u, int c) {
  return ds.layout().format() == SampleFormat::U8 ? sample_brick<std::uint8_t>(ds, slot, n, u, c)
                                                  : sample_brick<std::uint16_t>(ds, slot, n, u, c);
}

NodeRef parent_of(const DeviceState& ds, const NodeRef& n) {
  const core::VolumeLayout& L = ds.layout();
  Vec3u g = n.grid;
  for (int a = 0; a < 3; ++a)
    if (!L.flat(a)) g[a] >>= 1;
  return {core::parent_index(n.index), n.level + 1, g};
}

class Sampler {
 public:
  Sampler(const DeviceState& ds, const detail::MarchContext& ctx, const Scene& scene, bool refinement,
          PassStats& stats)
      : ds_(ds), ctx_(ctx), scene_(scene), refinement_(refinement), stats_(stats) {
    depth_ = ds.layout().depth();
    finest_ = std::min({ctx.spacing.x, ctx.spacing.y, ctx.spacing.z});
    bg_ = double(ds.tree().descriptor().background);
  }

  detail::SampleStatus operator()(const Vec3d& p, std::array<double, kMaxChannels>& v) {
    ++stats_.samples;
    const int level = optimal_lod(p, scene_.camera, scene_.settings, finest_, depth_);
    if (!ctx_.transforms) {
      const NodeRef n = lookup_node(ds_, ctx_.to_voxel(p), level);
      return resolve(n, ctx_.to_voxel(p), 0, ctx_.channels, v);
    }
    for (int c = 0; c < ctx_.channels; ++c) {
      const Vec3d pc = ctx_.mats[c].transform_point(p);
      if (!ctx_.inside(pc)) {
        v[c] = bg_;
        continue;
      }
      const Vec3d u = ctx_.to_voxel(pc);
      if (resolve(lookup_node(ds_, u, level), u, c, c + 1, v) == detail::SampleStatus::Suspend)
        return detail::SampleStatus::Suspend;
    }
    return detail::SampleStatus::Ok;
  }

 private:
  detail::SampleStatus resolve(const NodeRef& n, const Vec3d& u, int c0, int c1, std::array<double, kMaxChannels>& v) {
    const std::uint64_t e = ds_.entry(n.index);
    if (!NodeCodec::not_homogeneous(e)) {
      ++stats_.avg_samples;
      for (int c = c0; c < c1; ++c) v[c] = double(ds_.codec().avg(e, c));
      return detail::SampleStatus::Ok;
    }
    if (NodeCodec::in_buffer(e)) {
      ds_.mark_used(n.index);
      ++stats_.brick_samples;
      for (int c = c0; c < c1; ++c) v[c] = sample_slot(ds_, NodeCodec::slot(e), n, u, c);
      return detail::SampleStatus::Ok;
    }
    ds_.mark_requested(n.index);
    ++stats_.requests;
    if (refinement_) return detail::SampleStatus::Suspend;

    // Full-frame: the nearer of the two next-coarser levels stands in; all three bricks are requested.
    std::optional<std::pair<NodeRef, std::uint32_t>> stand_in;
    NodeRef a = n;
    for (int k = 0; k < 2 && a.index != 0; ++k) {
      a = parent_of(ds_, a);
      const std::uint64_t ae = ds_.entry(a.index);
      if (!NodeCodec::not_homogeneous(ae)) continue;
      if (NodeCodec::in_buffer(ae)) {
        if (!stand_in) stand_in.emplace(a, NodeCodec::slot(ae));
      } else {
        ds_.mark_requested(a.index);
        ++stats_.requests;
      }
    }
    if (stand_in) {
      ds_.mark_used(stand_in->first.index);
      ++stats_.coarse_fallbacks;
      for (int c = c0; c < c1; ++c) v[c] = sample_slot(ds_, stand_in->second, stand_in->first, u, c);
    } else {
      ++stats_.avg_fallbacks;
      for (int c = c0; c < c1; ++c) v[c] = double(ds_.codec().avg(e, c));
    }
    return detail::SampleStatus::Ok;
  }

  const DeviceState& ds_;
  const detail::MarchContext& ctx_;
  const Scene& scene_;
  bool refinement_;
  PassStats& stats_;
  int depth_ = 0;
  double finest_ = 1.0;
  double bg_ = 0.0;
};

}  // namespace

Image Raycaster::render_fullframe(const Scene& scene, PassStats* stats) const {
  const core::VolumeDescriptor& desc = ds_.tree().descriptor();
  scene.validate(desc.channels);
  const detail::MarchContext ctx(scene, desc);
  Image img(scene.camera.width, scene.camera.height);
  const int workers = scene.settings.threads > 0 ? scene.settings.threads
                                                 : int(std::max(1u, std::thread::hardware_concurrency()));
  std::vector<PassStats> per(std::size_t(std::max(1, workers)));
  detail::parallel_rows(img.height, workers, [&](int y0, int y1, int w) {
    Sampler sampler(ds_, ctx, scene, false, per[std::size_t(w)]);
    RayState s;
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < img.width; ++x) {
        const Ray ray = scene.camera.ray(x, y);
        detail::init_ray(s, ray, ctx);
        detail::march(s, ray, ctx, sampler, per[std::size_t(w)].tf_lookups);
        per[std::size_t(w)].tf_lookups += detail::resolve_lookups(s, ctx);
        detail::resolve_pixel(s, ctx, img.pixel(x, y));
      }
  });
  if (stats) {
    *stats = {};
    for (const PassStats& p : per) *stats += p;
  }
  return img;
}

bool Raycaster::render_refinement_pass(const Scene& scene, RayCache& cache, PassStats* stats) const {
  const core::VolumeDescriptor& desc = ds_.tree().descriptor();
  scene.validate(desc.channels);
  const detail::MarchContext ctx(scene, desc);
  const int width = scene.camera.width;
  if (!cache.valid_for(scene)) {
    cache.reset(scene, ctx.fmax);
    for (int y = 0; y < scene.camera.height; ++y)
      for (int x = 0; x < width; ++x)
        detail::init_ray(cache.states()[std::size_t(y) * std::size_t(width) + std::size_t(x)], scene.camera.ray(x, y),
                         ctx);
  }
  const int workers = scene.settings.threads > 0 ? scene.settings.threads
                                                 : int(std::max(1u, std::thread::hardware_concurrency()));
  std::vector<PassStats> per(std::size_t(std::max(1, workers)));
  detail::parallel_rows(scene.camera.height, workers, [&](int y0, int y1, int w) {
    PassStats& ps = per[std::size_t(w)];
    Sampler sampler(ds_, ctx, scene, true, ps);
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < width; ++x) {
        RayState& s = cache.states()[std::size_t(y) * std::size_t(width) + std::size_t(x)];
        if (s.finished) continue;
        if (!detail::march(s, scene.camera.ray(x, y), ctx, sampler, ps.tf_lookups)) {
          ++ps.suspended_rays;
        } else {
          ps.tf_lookups += detail::resolve_lookups(s, ctx);
        }
      }
  });
  cache.count_pass();
  PassStats total;
  for (const PassStats& p : per) total += p;
  if (stats) *stats = total;
  return total.requests == 0;
}

Image RayCache::image() const {
  Image img(scene_.camera.width, scene_.camera.height);
  if (!initialized_) return img;
  core::VolumeDescriptor d;
  d.channels = static_cast<int>(scene_.tfs.size());
  // Only the channel count and the MIP transfer function matter for resolving pixels here.
  detail::MarchContext ctx(scene_, d);
  ctx.fmax = fmax_;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      detail::resolve_pixel(states_[std::size_t(y) * std::size_t(img.width) + std::size_t(x)], ctx, img.pixel(x, y));
  return img;
}

}  // namespace voxstream::render
