// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/device/node_entry.hpp"

#include "voxstream/core/volume.hpp"

namespace voxstream::device {

NodeCodec::NodeCodec(int channels, SampleFormat format) : channels_(channels) {
  if (channels < 1 || channels > kMaxChannels) throw ConfigError("node entries support 1 to 4 channels");
  avg_bits_ = kPayloadBits / channels;
  qmax_ = (std::uint64_t{1} << avg_bits_) - 1;
  fmax_ = format_max(format);
  exact_ = qmax_ >= fmax_;
}

std::uint64_t NodeCodec::quantize(std::uint16_t v) const {
  if (exact_) return v;
  // Round to nearest, halves up.
  return (std::uint64_t{v} * qmax_ * 2 + fmax_) / (2 * fmax_);
}

std::uint16_t NodeCodec::dequantize(std::uint64_t q) const {
  if (exact_) return static_cast<std::uint16_t>(q);
  return static_cast<std::uint16_t>((q * fmax_ * 2 + qmax_) / (2 * qmax_));
}

std::uint64_t NodeCodec::pack(const NodeState& s) const {
  if (s.child_pointer > kMaxChildPointer) throw BoundsError("child pointer exceeds 22 bits");
  std::uint64_t e = (s.in_buffer ? 1u : 0u) | (s.not_homogeneous ? 2u : 0u) | (std::uint64_t{s.child_pointer} << 2);
  if (s.in_buffer) return e | (std::uint64_t{s.slot} << 24);
  std::uint64_t payload = 0;
  for (int c = 0; c < channels_; ++c) payload |= quantize(s.avg[c]) << (c * avg_bits_);
  return e | (payload << 24);
}

std::uint16_t NodeCodec::avg(std::uint64_t e, int channel) const {
  return dequantize(((e >> 24) >> (channel * avg_bits_)) & qmax_);
}

NodeState NodeCodec::unpack(std::uint64_t e) const {
  NodeState s;
  s.in_buffer = in_buffer(e);
  s.not_homogeneous = not_homogeneous(e);
  s.child_pointer = child_pointer(e);
  if (s.in_buffer) {
    s.slot = slot(e);
  } else {
    for (int c = 0; c < channels_; ++c) s.avg[c] = avg(e, c);
  }
  return s;
}

std::uint64_t node_buffer_bytes(int levels) { return core::complete_tree_nodes(levels) * 8; }

}  // namespace voxstream::device
