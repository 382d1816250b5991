// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/app/settings_file.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace voxstream::app {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<double> reals(const std::string& key, const std::string& value, std::size_t n) {
  std::istringstream in(value);
  std::vector<double> out;
  for (std::string w; in >> w;) {
    double v = 0;
    const auto r = std::from_chars(w.data(), w.data() + w.size(), v);
    if (r.ec != std::errc{} || r.ptr != w.data() + w.size()) throw ConfigError("bad number '" + w + "' for " + key);
    out.push_back(v);
  }
  if (out.size() != n) throw ConfigError(key + " needs " + std::to_string(n) + " values");
  return out;
}

double real(const std::string& key, const std::string& value) { return reals(key, value, 1)[0]; }

int integer(const std::string& key, const std::string& value) {
  const double v = real(key, value);
  if (v != static_cast<int>(v)) throw ConfigError(key + " must be an integer");
  return static_cast<int>(v);
}

Vec3d vec(const std::string& key, const std::string& value) {
  const auto v = reals(key, value, 3);
  return {v[0], v[1], v[2]};
}

}  // namespace

SettingsFile parse_settings(std::string_view text) {
  SettingsFile s;
  render::Scene& sc = s.scene;
  std::map<int, std::vector<render::ControlPoint>> tfs;
  std::istringstream in{std::string(text)};
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key == "width") {
      sc.camera.width = integer(key, value);
    } else if (key == "height") {
      sc.camera.height = integer(key, value);
    } else if (key == "fov") {
      sc.camera.fov_y = real(key, value);
    } else if (key == "camera.position") {
      sc.camera.position = vec(key, value);
      s.camera_given = true;
    } else if (key == "camera.look_at") {
      sc.camera.look_at = vec(key, value);
      s.camera_given = true;
    } else if (key == "camera.up") {
      sc.camera.up = vec(key, value);
    } else if (key == "orbit") {
      const auto v = reals(key, value, 3);
      s.orbit = {v[0], v[1], v[2]};
    } else if (key == "mode") {
      if (value == "dvr") {
        sc.settings.mode = render::Mode::DVR;
      } else if (value == "mip") {
        sc.settings.mode = render::Mode::MIP;
      } else {
        throw ConfigError("mode must be dvr or mip");
      }
    } else if (key == "strategy") {
      if (value == "fullframe") {
        sc.settings.strategy = device::Strategy::FullFrame;
      } else if (value == "refinement") {
        sc.settings.strategy = device::Strategy::Refinement;
      } else {
        throw ConfigError("strategy must be fullframe or refinement");
      }
    } else if (key == "step") {
      sc.settings.step = real(key, value);
    } else if (key == "reference_step") {
      sc.settings.reference_step = real(key, value);
    } else if (key == "early_termination") {
      sc.settings.early_termination = real(key, value);
    } else if (key == "lod_bias") {
      sc.settings.lod_bias = real(key, value);
    } else if (key == "threads") {
      sc.settings.threads = integer(key, value);
    } else if (key == "clip") {
      const auto v = reals(key, value, 4);
      sc.clips.push_back({{v[0], v[1], v[2]}, v[3]});
    } else if (key.rfind("tf.", 0) == 0) {
      const int c = integer(key, key.substr(3));
      if (c < 0 || c >= kMaxChannels) throw ConfigError("bad channel in " + key);
      const auto v = reals(key, value, 5);
      tfs[c].push_back({v[0], {v[1], v[2], v[3], v[4]}});
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  if (sc.clips.size() > std::size_t(render::kMaxClipPlanes)) throw ConfigError("at most three clip planes");
  if (!tfs.empty()) {
    if (tfs.rbegin()->first + 1 != static_cast<int>(tfs.size()))
      throw ConfigError("transfer functions must cover channels 0..n-1 without gaps");
    for (auto& [c, pts] : tfs) sc.tfs.emplace_back(std::move(pts));
  }
  sc.camera.validate();
  return s;
}

SettingsFile read_settings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_settings(ss.str());
}

std::string format_settings(const SettingsFile& s) {
  const render::Scene& sc = s.scene;
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "width = " << sc.camera.width << "\nheight = " << sc.camera.height << "\nfov = " << sc.camera.fov_y << '\n';
  auto v3 = [&](const char* k, const Vec3d& v) { out << k << " = " << v.x << ' ' << v.y << ' ' << v.z << '\n'; };
  if (s.camera_given) {
    v3("camera.position", sc.camera.position);
    v3("camera.look_at", sc.camera.look_at);
  }
  v3("camera.up", sc.camera.up);
  out << "orbit = " << s.orbit.azimuth << ' ' << s.orbit.elevation << ' ' << s.orbit.distance << '\n';
  out << "mode = " << (sc.settings.mode == render::Mode::MIP ? "mip" : "dvr") << '\n';
  out << "strategy = " << (sc.settings.strategy == device::Strategy::Refinement ? "refinement" : "fullframe") << '\n';
  out << "step = " << sc.settings.step << "\nreference_step = " << sc.settings.reference_step
      << "\nearly_termination = " << sc.settings.early_termination << "\nlod_bias = " << sc.settings.lod_bias
      << "\nthreads = " << sc.settings.threads << '\n';
  for (const auto& c : sc.clips)
    out << "clip = " << c.normal.x << ' ' << c.normal.y << ' ' << c.normal.z << ' ' << c.offset << '\n';
  for (std::size_t c = 0; c < sc.tfs.size(); ++c)
    for (const auto& p : sc.tfs[c].points())
      out << "tf." << c << " = " << p.position << ' ' << p.color[0] << ' ' << p.color[1] << ' ' << p.color[2] << ' '
          << p.color[3] << '\n';
  return out.str();
}

render::Camera orbit_camera(const core::VolumeDescriptor& d, const Orbit& o, int width, int height, double fov_y) {
  Vec3d ext;
  for (int a = 0; a < 3; ++a) ext[a] = double(d.dims[a]) * d.spacing[a];
  const double r = o.distance > 0.0 ? o.distance : 2.0 * length(ext);
  return render::Camera::orbit(ext * 0.5, r, o.azimuth, o.elevation, width, height, fov_y);
}

render::TransferFunction default_transfer_function(int channel) {
  static const render::Rgba colors[] = {{1.0, 0.85, 0.6, 0.8}, {0.3, 1.0, 0.4, 0.8}, {0.35, 0.5, 1.0, 0.8},
                                        {1.0, 0.3, 0.9, 0.8}};
  const render::Rgba& c = colors[channel % 4];
  return render::TransferFunction({{0.0, {0, 0, 0, 0}}, {0.1, {0, 0, 0, 0}}, {1.0, c}});
}

render::Scene resolve_scene(const SettingsFile& s, const core::VolumeDescriptor& d) {
  render::Scene sc = s.scene;
  if (!s.camera_given) {
    const render::Camera c = orbit_camera(d, s.orbit, sc.camera.width, sc.camera.height, sc.camera.fov_y);
    sc.camera.position = c.position;
    sc.camera.look_at = c.look_at;
  }
  if (static_cast<int>(sc.tfs.size()) > d.channels) throw ConfigError("more transfer functions than channels");
  for (int c = static_cast<int>(sc.tfs.size()); c < d.channels; ++c) sc.tfs.push_back(default_transfer_function(c));
  sc.validate(d.channels);
  return sc;
}

}  // namespace voxstream::app
