// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "voxstream/common/types.hpp"

namespace voxstream::device {

inline constexpr int kChildPointerBits = 22;
inline constexpr std::uint32_t kMaxChildPointer = (1u << kChildPointerBits) - 1;
inline constexpr int kPayloadBits = 40;
// Deepest root level whose internal nodes all fit a child pointer (a nine-level tree).
inline constexpr int kMaxDepth = 8;

// Unpacked node entry. When in_buffer is set the payload is a slot index and avg is ignored.
struct NodeState {
  bool in_buffer = false;
  bool not_homogeneous = false;
  std::uint32_t child_pointer = 0;  // 0 = no children; otherwise parent index + 1
  std::uint32_t slot = 0;
  ChannelValues avg{};

  friend bool operator==(const NodeState&, const NodeState&) = default;
};

// 64-bit node entry: bit 0 in-buffer, bit 1 not-homogeneous, bits 2..23 child pointer,
// bits 24..63 slot index (low 32 bits) or floor(40 / C) bits of AVG per channel.
class NodeCodec {
 public:
  NodeCodec() = default;
  NodeCodec(int channels, SampleFormat format);

  int channels() const { return channels_; }
  int avg_bits() const { return avg_bits_; }
  // Throws BoundsError on an overflowing child pointer; AVG values are quantized.
  std::uint64_t pack(const NodeState& s) const;
  NodeState unpack(std::uint64_t e) const;

  std::uint64_t quantize(std::uint16_t v) const;
  std::uint16_t dequantize(std::uint64_t q) const;
  std::uint16_t roundtrip(std::uint16_t v) const { return dequantize(quantize(v)); }

  static bool in_buffer(std::uint64_t e) { return e & 1u; }
  static bool not_homogeneous(std::uint64_t e) { return (e >> 1) & 1u; }
  static std::uint32_t child_pointer(std::uint64_t e) { return static_cast<std::uint32_t>((e >> 2) & kMaxChildPointer); }
  static std::uint32_t slot(std::uint64_t e) { return static_cast<std::uint32_t>(e >> 24); }
  static std::uint64_t first_child(std::uint32_t pointer) { return 8ull * (pointer - 1) + 1; }
  std::uint16_t avg(std::uint64_t e, int channel) const;

 private:
  int channels_ = 1;
  int avg_bits_ = kPayloadBits;
  std::uint64_t qmax_ = 0;   // largest code of one channel
  std::uint64_t fmax_ = 0;   // largest sample value
  bool exact_ = true;        // channel width holds the sample width: values are stored as is
};

// Bytes of a node buffer holding a complete tree with `levels` levels.
std::uint64_t node_buffer_bytes(int levels);

}  // namespace voxstream::device
