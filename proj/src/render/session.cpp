// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/render/session.hpp"

namespace voxstream::render {

RenderSession::RenderSession(core::Octree& tree, device::DeviceConfig cfg)
    : tree_(tree), device_(std::make_unique<device::DeviceState>(tree, cfg)), caster_(*device_) {
  tree_.drain_events();
}

bool RenderSession::sync() {
  const std::vector<core::ChangeEvent> events = tree_.drain_events();
  if (events.empty()) return false;
  device_->apply_events(events);
  invalidate();
  return true;
}

FrameResult RenderSession::frame(const Scene& scene) {
  sync();
  FrameResult r;
  if (scene.settings.strategy == device::Strategy::FullFrame) {
    r.image = caster_.render_fullframe(scene, &r.stats);
    r.complete = r.stats.requests == 0;
  } else {
    r.complete = caster_.render_refinement_pass(scene, cache_, &r.stats);
    r.image = cache_.image();
    r.passes = cache_.passes();
  }
  const device::UploadPlan plan = device_->process_flags(scene.settings.strategy);
  r.upload = device_->upload(plan, *clock_, [this](std::uint64_t n, std::span<std::byte> d, bool& bv) {
    return device_->fetch_from_tree(n, d, bv);
  });
  return r;
}

FrameResult RenderSession::render_complete(const Scene& scene, int max_passes) {
  for (int i = 0; i < max_passes; ++i) {
    FrameResult r = frame(scene);
    if (r.complete) return r;
  }
  throw Error("rendering did not complete within the pass limit");
}

}  // namespace voxstream::render
