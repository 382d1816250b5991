// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/app/control.hpp"

#include <json.hpp>

#include "voxstream/app/settings_file.hpp"

namespace voxstream::app {

namespace {

using nlohmann::json;

Vec3d vec3(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 3) throw ConfigError(std::string(key) + " must be [x, y, z]");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

json to_json(const Vec3d& v) { return json::array({v.x, v.y, v.z}); }

const char* policy_name(StrategyPolicy p) {
  switch (p) {
    case StrategyPolicy::Auto: return "auto";
    case StrategyPolicy::FullFrame: return "fullframe";
    case StrategyPolicy::Refinement: return "refinement";
  }
  return "auto";
}

void apply(const json& m, const std::string& type, ViewState& v, const core::VolumeDescriptor& d, ControlResult& r) {
  render::Scene& s = v.scene;
  if (type == "camera") {
    if (m.contains("position")) s.camera.position = vec3(m, "position");
    if (m.contains("look_at")) s.camera.look_at = vec3(m, "look_at");
    if (m.contains("up")) s.camera.up = vec3(m, "up");
    if (m.contains("fov")) s.camera.fov_y = m.at("fov").get<double>();
    r.view_changed = true;
  } else if (type == "orbit") {
    Orbit o{m.at("azimuth").get<double>(), m.at("elevation").get<double>(), m.value("distance", 0.0)};
    const render::Camera c = orbit_camera(d, o, s.camera.width, s.camera.height, s.camera.fov_y);
    s.camera.position = c.position;
    s.camera.look_at = c.look_at;
    s.camera.up = c.up;
    r.view_changed = true;
  } else if (type == "tf") {
    const int c = m.at("channel").get<int>();
    if (c < 0 || c >= d.channels) throw ConfigError("channel out of range");
    std::vector<render::ControlPoint> pts;
    for (const json& p : m.at("points")) {
      if (!p.is_array() || p.size() != 5) throw ConfigError("control points are [i, r, g, b, a]");
      pts.push_back({p[0].get<double>(), {p[1].get<double>(), p[2].get<double>(), p[3].get<double>(),
                                          p[4].get<double>()}});
    }
    s.tfs.at(std::size_t(c)) = render::TransferFunction(std::move(pts));
    r.view_changed = true;
  } else if (type == "clip") {
    std::vector<render::ClipPlane> planes;
    for (const json& p : m.at("planes")) {
      if (!p.is_array() || p.size() != 4) throw ConfigError("clip planes are [nx, ny, nz, offset]");
      planes.push_back({{p[0].get<double>(), p[1].get<double>(), p[2].get<double>()}, p[3].get<double>()});
    }
    s.clips = std::move(planes);
    r.view_changed = true;
  } else if (type == "mode") {
    const std::string mode = m.at("mode").get<std::string>();
    if (mode == "dvr") {
      s.settings.mode = render::Mode::DVR;
    } else if (mode == "mip") {
      s.settings.mode = render::Mode::MIP;
    } else {
      throw ConfigError("mode must be dvr or mip");
    }
    r.view_changed = true;
  } else if (type == "strategy") {
    const std::string st = m.at("strategy").get<std::string>();
    if (st == "auto") {
      v.policy = StrategyPolicy::Auto;
    } else if (st == "fullframe") {
      v.policy = StrategyPolicy::FullFrame;
    } else if (st == "refinement") {
      v.policy = StrategyPolicy::Refinement;
    } else {
      throw ConfigError("strategy must be auto, fullframe or refinement");
    }
    r.view_changed = true;
  } else if (type == "resize") {
    const int w = m.at("width").get<int>(), h = m.at("height").get<int>();
    if (w < 1 || h < 1 || w > 4096 || h > 4096) throw ConfigError("image size must lie in [1, 4096]");
    s.camera.width = w;
    s.camera.height = h;
    r.view_changed = true;
  } else if (type == "reset") {
    r.reset = true;
  } else if (type == "abort") {
    r.abort_ingest = true;
  } else if (type == "settings") {
    r.wants_settings = true;
  } else {
    throw ConfigError("unknown message type '" + type + "'");
  }
  s.validate(d.channels);
}

}  // namespace

ControlResult apply_control(std::string_view text, ViewState& view, const core::VolumeDescriptor& desc) {
  ControlResult r;
  json m;
  try {
    m = json::parse(text);
  } catch (const json::exception& e) {
    r.error = std::string("malformed JSON: ") + e.what();
    return r;
  }
  if (!m.is_object()) {
    r.error = "control message must be a JSON object";
    return r;
  }
  if (m.contains("id") && m["id"].is_number_integer()) r.id = m["id"].get<std::int64_t>();
  if (!m.contains("type") || !m["type"].is_string()) {
    r.error = "control message lacks a type";
    return r;
  }
  r.type = m["type"].get<std::string>();
  ViewState next = view;
  try {
    apply(m, r.type, next, desc, r);
  } catch (const json::exception& e) {
    r = ControlResult{.id = r.id, .type = r.type, .error = {}};
    r.error = std::string("bad field: ") + e.what();
    return r;
  } catch (const Error& e) {
    r = ControlResult{.id = r.id, .type = r.type, .error = {}};
    r.error = e.what();
    return r;
  } catch (const std::out_of_range& e) {
    r = ControlResult{.id = r.id, .type = r.type, .error = {}};
    r.error = e.what();
    return r;
  }
  view = std::move(next);
  r.ok = true;
  return r;
}

std::string settings_json(const ViewState& view) {
  const render::Scene& s = view.scene;
  json j;
  j["camera"] = {{"position", to_json(s.camera.position)},
                 {"look_at", to_json(s.camera.look_at)},
                 {"up", to_json(s.camera.up)},
                 {"fov", s.camera.fov_y}};
  j["width"] = s.camera.width;
  j["height"] = s.camera.height;
  j["mode"] = s.settings.mode == render::Mode::MIP ? "mip" : "dvr";
  j["strategy"] = policy_name(view.policy);
  json clips = json::array();
  for (const auto& c : s.clips) clips.push_back({c.normal.x, c.normal.y, c.normal.z, c.offset});
  j["clips"] = clips;
  json tfs = json::array();
  for (const auto& tf : s.tfs) {
    json pts = json::array();
    for (const auto& p : tf.points()) pts.push_back({p.position, p.color[0], p.color[1], p.color[2], p.color[3]});
    tfs.push_back(pts);
  }
  j["tfs"] = tfs;
  return j.dump();
}

std::string control_reply(const ControlResult& r, const ViewState& view) {
  json j;
  j["type"] = r.ok ? "ack" : "nack";
  j["id"] = r.id ? json(*r.id) : json(nullptr);
  j["for"] = r.type;
  if (!r.ok) j["error"] = r.error;
  if (r.ok && r.wants_settings) j["settings"] = json::parse(settings_json(view));
  return j.dump();
}

std::string status_json(const ServiceStatus& s) {
  json j;
  j["type"] = "status";
  j["frame"] = s.frame;
  j["phase"] = s.phase;
  j["progress"] = s.progress;
  j["bricks_resident"] = s.bricks_resident;
  j["refinement_complete"] = s.refinement_complete;
  j["refinement_passes"] = s.refinement_passes;
  j["ingest"] = s.ingest;
  j["frames_dropped"] = s.frames_dropped;
  return j.dump();
}

}  // namespace voxstream::app
