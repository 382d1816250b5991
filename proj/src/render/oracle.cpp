// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "march.hpp"
#include "voxstream/render/raycaster.hpp"

namespace voxstream::render {

Image render_oracle(const InCoreVolume& volume, const Scene& scene) {
  const core::VolumeDescriptor& d = volume.desc;
  d.validate();
  scene.validate(d.channels);
  if (static_cast<int>(volume.channels.size()) != d.channels) throw ConfigError("oracle volume channel count mismatch");
  for (const auto& ch : volume.channels)
    if (ch.size() != voxel_count(d.dims)) throw ConfigError("oracle volume size mismatch");
  const detail::MarchContext ctx(scene, d);
  const double bg = double(d.background);

  auto voxel = [&](int c, std::int64_t x, std::int64_t y, std::int64_t z) {
    if (x < 0 || y < 0 || z < 0 || x >= std::int64_t(d.dims.x) || y >= std::int64_t(d.dims.y) ||
        z >= std::int64_t(d.dims.z))
      return bg;
    return double(volume.channels[std::size_t(c)][(std::size_t(z) * d.dims.y + std::size_t(y)) * d.dims.x +
                                                  std::size_t(x)]);
  };
  auto sampler = [&](const Vec3d& p, std::array<double, kMaxChannels>& v) {
    for (int c = 0; c < d.channels; ++c) {
      const Vec3d pc = ctx.transforms ? ctx.mats[c].transform_point(p) : p;
      if (ctx.transforms && !ctx.inside(pc)) {
        v[c] = bg;
        continue;
      }
      v[c] = detail::trilinear(ctx.to_voxel(pc),
                               [&](std::int64_t i, std::int64_t j, std::int64_t k) { return voxel(c, i, j, k); });
    }
    return detail::SampleStatus::Ok;
  };

  Image img(scene.camera.width, scene.camera.height);
  detail::parallel_rows(img.height, scene.settings.threads, [&](int y0, int y1, int) {
    RayState s;
    std::uint64_t lookups = 0;
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < img.width; ++x) {
        const Ray ray = scene.camera.ray(x, y);
        detail::init_ray(s, ray, ctx);
        detail::march(s, ray, ctx, sampler, lookups);
        detail::resolve_pixel(s, ctx, img.pixel(x, y));
      }
  });
  return img;
}

}  // namespace voxstream::render
