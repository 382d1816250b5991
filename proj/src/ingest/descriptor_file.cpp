// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/ingest/descriptor_file.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace voxstream::ingest {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

template <class T>
T number(const std::string& key, const std::string& w) {
  T v{};
  const auto r = std::from_chars(w.data(), w.data() + w.size(), v);
  if (r.ec != std::errc{} || r.ptr != w.data() + w.size()) throw ConfigError("bad number '" + w + "' for " + key);
  return v;
}

template <class T>
std::vector<T> numbers(const std::string& key, const std::string& value, std::size_t n) {
  const auto ws = words(value);
  if (ws.size() != n) throw ConfigError(key + " needs " + std::to_string(n) + " values");
  std::vector<T> out;
  for (const auto& w : ws) out.push_back(number<T>(key, w));
  return out;
}

}  // namespace

void RawVolumeSource::validate() const {
  descriptor.validate();
  const std::size_t expected = interleaved ? 1 : std::size_t(descriptor.channels);
  if (files.size() != expected)
    throw ConfigError("expected " + std::to_string(expected) + " data file(s), got " + std::to_string(files.size()));
  const std::uintmax_t per_channel = voxel_count(descriptor.dims) * sample_bytes(descriptor.format);
  const std::uintmax_t want = interleaved ? per_channel * std::uintmax_t(descriptor.channels) : per_channel;
  for (const auto& f : files) {
    std::error_code ec;
    const std::uintmax_t size = std::filesystem::file_size(f, ec);
    if (ec) throw IoError("cannot read " + f.string() + ": " + ec.message());
    if (size != want)
      throw IoError(f.string() + " holds " + std::to_string(size) + " bytes, expected " + std::to_string(want));
  }
}

RawVolumeSource parse_source(std::string_view text, const std::filesystem::path& base_dir) {
  RawVolumeSource src;
  core::VolumeDescriptor& d = src.descriptor;
  std::map<int, std::array<double, 16>> transforms;
  std::map<int, int> rows_seen;
  bool have_dims = false;
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
    if (key == "dims") {
      const auto v = numbers<std::uint32_t>(key, value, 3);
      d.dims = {v[0], v[1], v[2]};
      have_dims = true;
    } else if (key == "channels") {
      d.channels = number<int>(key, value);
    } else if (key == "format") {
      if (value == "u8") {
        d.format = SampleFormat::U8;
      } else if (value == "u16") {
        d.format = SampleFormat::U16;
      } else {
        throw ConfigError("format must be u8 or u16");
      }
    } else if (key == "spacing") {
      const auto v = numbers<double>(key, value, 3);
      d.spacing = {v[0], v[1], v[2]};
    } else if (key == "background") {
      const auto v = number<std::uint32_t>(key, value);
      if (v > 0xFFFF) throw ConfigError("background out of range");
      d.background = static_cast<std::uint16_t>(v);
    } else if (key.rfind("transform.", 0) == 0) {
      const std::string rest = key.substr(10);
      const auto dot = rest.find('.');
      if (dot == std::string::npos) throw ConfigError("transform key must be transform.<channel>.<row>");
      const int c = number<int>(key, rest.substr(0, dot));
      const int row = number<int>(key, rest.substr(dot + 1));
      if (c < 0 || c >= kMaxChannels || row < 0 || row > 3) throw ConfigError("bad transform key " + key);
      auto& m = transforms.try_emplace(c, Mat4::identity().values()).first->second;
      const auto v = numbers<double>(key, value, 4);
      for (int k = 0; k < 4; ++k) m[std::size_t(row * 4 + k)] = v[std::size_t(k)];
      ++rows_seen[c];
    } else if (key == "data") {
      for (const auto& w : words(value)) {
        std::filesystem::path p(w);
        src.files.push_back(p.is_absolute() || base_dir.empty() ? p : base_dir / p);
      }
    } else if (key == "layout") {
      if (value == "planar") {
        src.interleaved = false;
      } else if (value == "interleaved") {
        src.interleaved = true;
      } else {
        throw ConfigError("layout must be planar or interleaved");
      }
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  if (!have_dims) throw ConfigError("descriptor lacks dims");
  if (!transforms.empty()) {
    for (const auto& [c, m] : transforms)
      if (c >= d.channels) throw ConfigError("transform for channel " + std::to_string(c) + " beyond channel count");
    d.channel_transforms.assign(std::size_t(d.channels), Mat4::identity());
    for (const auto& [c, m] : transforms) d.channel_transforms[std::size_t(c)] = Mat4(m);
  }
  d.validate();
  return src;
}

RawVolumeSource read_source(const std::filesystem::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) throw IoError("cannot read " + sidecar.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_source(ss.str(), sidecar.parent_path());
}

core::VolumeDescriptor read_descriptor(const std::filesystem::path& sidecar) { return read_source(sidecar).descriptor; }

std::string format_source(const RawVolumeSource& src, const std::filesystem::path& base_dir) {
  const core::VolumeDescriptor& d = src.descriptor;
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "dims = " << d.dims.x << ' ' << d.dims.y << ' ' << d.dims.z << '\n';
  out << "channels = " << d.channels << '\n';
  out << "format = " << format_name(d.format) << '\n';
  out << "spacing = " << d.spacing.x << ' ' << d.spacing.y << ' ' << d.spacing.z << '\n';
  out << "background = " << d.background << '\n';
  for (std::size_t c = 0; c < d.channel_transforms.size(); ++c) {
    const Mat4& m = d.channel_transforms[c];
    if (m.is_identity()) continue;
    for (int r = 0; r < 4; ++r)
      out << "transform." << c << '.' << r << " = " << m(r, 0) << ' ' << m(r, 1) << ' ' << m(r, 2) << ' ' << m(r, 3)
          << '\n';
  }
  if (!src.files.empty()) {
    out << "layout = " << (src.interleaved ? "interleaved" : "planar") << '\n';
    out << "data =";
    for (const auto& f : src.files) {
      const std::filesystem::path p = base_dir.empty() ? f : std::filesystem::proximate(f, base_dir);
      out << ' ' << p.string();
    }
    out << '\n';
  }
  return out.str();
}

void write_source(const std::filesystem::path& sidecar, const RawVolumeSource& src) {
  std::ofstream out(sidecar);
  if (!out) throw IoError("cannot write " + sidecar.string());
  out << format_source(src, sidecar.parent_path());
  if (!out) throw IoError("cannot write " + sidecar.string());
}

}  // namespace voxstream::ingest
