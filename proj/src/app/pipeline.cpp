// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/app/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "voxstream/render/session.hpp"

namespace voxstream::app {

ingest::BuildReport build_store(const ingest::RawVolumeSource& source, const core::BrickPoolConfig& cfg,
                                const std::filesystem::path& out_dir, std::uint32_t slab_depth) {
  source.validate();
  std::filesystem::create_directories(out_dir);
  const auto work = out_dir / "build.tmp.vxbp";
  std::filesystem::remove(work);
  ingest::BuildReport r;
  {
    auto tree = core::Octree::create(source.descriptor, cfg, work);
    r = ingest::ingest_bulk(source, *tree, {slab_depth, true});
    tree->save(out_dir);
  }
  std::filesystem::remove(work);
  return r;
}

std::string RenderRun::summary() const {
  std::ostringstream out;
  out << "passes=" << passes << " bricks_uploaded=" << uploads << " page_faults=" << page_faults
      << " tf_lookups=" << tf_lookups << " time_s=" << seconds;
  return out.str();
}

RenderRun render_store(core::Octree& tree, const render::Scene& scene, const device::DeviceConfig& cfg,
                       int max_passes) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t faults0 = tree.store().counters().page_reads;
  render::RenderSession session(tree, cfg);
  RenderRun run;
  render::Scene s = scene;
  s.settings.strategy = device::Strategy::FullFrame;
  run.fullframe = session.frame(s).image;
  s.settings.strategy = device::Strategy::Refinement;
  for (;;) {
    if (run.passes >= max_passes) throw Error("refinement did not complete within the pass limit");
    const render::FrameResult r = session.frame(s);
    ++run.passes;
    run.tf_lookups += r.stats.tf_lookups;
    if (r.complete) {
      run.image = r.image;
      break;
    }
  }
  run.uploads = session.device().total_uploads();
  run.page_faults = tree.store().counters().page_reads - faults0;
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

std::string BenchReport::summary() const {
  std::ostringstream out;
  out << "frames=" << frames << " mean_ms=" << mean_ms << " p50_ms=" << p50_ms << " p95_ms=" << p95_ms
      << " p99_ms=" << p99_ms << " max_ms=" << max_ms << " avg_fallbacks=" << avg_fallbacks
      << " coarse_fallbacks=" << coarse_fallbacks << " uploads=" << uploads << " warmup_uploads=" << warmup_uploads
      << " evictions=" << evictions << " page_faults=" << page_faults;
  return out.str();
}

BenchReport run_bench(core::Octree& tree, const render::Scene& scene, const device::DeviceConfig& cfg,
                      const BenchOptions& opt) {
  if (opt.frames <= 0) throw ConfigError("bench needs at least one frame");
  const std::uint64_t faults0 = tree.store().counters().page_reads;
  render::RenderSession session(tree, cfg);
  render::Scene s = scene;
  s.settings.strategy = device::Strategy::FullFrame;
  const double radius = opt.distance > 0.0 ? opt.distance : length(scene.camera.position - opt.centre);

  BenchReport rep;
  rep.frames = opt.frames;
  std::vector<double> times;
  for (int rev = 0; rev <= opt.warmup_revolutions; ++rev) {
    const bool measured = rev == opt.warmup_revolutions;
    const std::uint64_t up0 = session.device().total_uploads();
    const std::uint64_t ev0 = session.device().total_evictions();
    for (int f = 0; f < opt.frames; ++f) {
      const double az = 2.0 * std::numbers::pi * f / opt.frames;
      s.camera = render::Camera::orbit(opt.centre, radius, az, opt.elevation, scene.camera.width,
                                       scene.camera.height, scene.camera.fov_y);
      const auto t0 = std::chrono::steady_clock::now();
      render::FrameResult r = session.frame(s);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (!measured) continue;
      times.push_back(ms);
      rep.avg_fallbacks += r.stats.avg_fallbacks;
      rep.coarse_fallbacks += r.stats.coarse_fallbacks;
      rep.frame_avg_fallbacks.push_back(r.stats.avg_fallbacks);
      if (opt.keep_images) rep.images.push_back(std::move(r.image));
    }
    if (measured) {
      rep.uploads = session.device().total_uploads() - up0;
      rep.evictions = session.device().total_evictions() - ev0;
    } else {
      rep.warmup_uploads += session.device().total_uploads() - up0;
    }
  }
  std::vector<double> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  auto pct = [&](double p) {
    const std::size_t i = std::min(sorted.size() - 1, static_cast<std::size_t>(std::ceil(p * sorted.size())) - 1);
    return sorted[i];
  };
  double sum = 0;
  for (double t : times) sum += t;
  rep.mean_ms = sum / double(times.size());
  rep.p50_ms = pct(0.50);
  rep.p95_ms = pct(0.95);
  rep.p99_ms = pct(0.99);
  rep.max_ms = sorted.back();
  rep.page_faults = tree.store().counters().page_reads - faults0;
  return rep;
}

}  // namespace voxstream::app
