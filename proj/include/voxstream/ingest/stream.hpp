// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "voxstream/common/byte_stream.hpp"
#include "voxstream/core/octree.hpp"

namespace voxstream::ingest {

// Slab stream, little-endian:
//   header  "VSTR", u16 version, u32 descriptor length, descriptor record
//   slab    u16 channel, u32 origin[3], u32 dims[3], u32 crc32(payload), payload (x-fastest native samples)
//   end     u16 0xFFFF
//   abort   u16 0xFFFE
// Acknowledgements flow back as u8 status (ACK 0x06 / NACK 0x15), u32 frame sequence, u16 error code.
inline constexpr std::uint16_t kStreamVersion = 1;
inline constexpr std::uint16_t kEndFrame = 0xFFFF;
inline constexpr std::uint16_t kAbortFrame = 0xFFFE;
inline constexpr std::uint8_t kAck = 0x06;
inline constexpr std::uint8_t kNack = 0x15;
inline constexpr std::size_t kSlabHeaderBytes = 2 + 12 + 12 + 4;
inline constexpr std::size_t kAckBytes = 7;

enum class StreamError : std::uint16_t {
  None = 0,
  BadMagic = 1,
  BadVersion = 2,
  BadDescriptor = 3,
  Truncated = 4,
  BadChecksum = 5,
  OversizedSlab = 6,
  OutOfBounds = 7,
  BadChannel = 8,
  DescriptorMismatch = 9,
};
const char* to_string(StreamError e);

// Raised while reading the header; carries the wire error code.
class StreamFormatError : public FormatError {
 public:
  StreamFormatError(StreamError code, const std::string& what) : FormatError(what), code_(code) {}
  StreamError code() const { return code_; }

 private:
  StreamError code_;
};

class StreamWriter {
 public:
  explicit StreamWriter(ByteSink& out) : out_(out) {}
  void header(const core::VolumeDescriptor& desc);
  void slab(int channel, const Vec3u& origin, const Vec3u& dims, std::span<const std::byte> payload);
  // u16 samples, converted to the native width.
  void slab(int channel, const Vec3u& origin, const Vec3u& dims, std::span<const std::uint16_t> values,
            SampleFormat format);
  void end();
  void abort();

 private:
  ByteSink& out_;
};

// Throws StreamFormatError.
core::VolumeDescriptor read_stream_header(ByteSource& in);

struct Ack {
  bool ok = false;
  std::uint32_t sequence = 0;
  StreamError error = StreamError::None;
};
std::optional<Ack> read_ack(ByteSource& in);

enum class StreamEnd { End, Abort, Stopped, Eof, Malformed };
const char* to_string(StreamEnd e);

struct StreamReport {
  StreamEnd end = StreamEnd::Eof;
  StreamError error = StreamError::None;
  std::uint64_t frames = 0;    // slab frames read
  std::uint64_t accepted = 0;  // inserted
  std::uint64_t rejected = 0;  // NACKed, stream continued
  std::uint64_t payload_bytes = 0;
  double seconds = 0.0;
  std::string summary() const;
};

struct StreamOptions {
  std::size_t queue_depth = 8;  // slabs buffered per channel before the reader blocks
  bool finalize = true;         // mark_finished and fill_borders when the stream stops, however it stops
};

// Feeds a slab stream into a tree: the calling thread reads and validates frames, one worker per
// channel inserts them.
class StreamIngestor {
 public:
  explicit StreamIngestor(core::Octree& tree, StreamOptions opt = {}) : tree_(tree), opt_(opt) {}

  // Consumes frames after the header until end, abort, end of input or a malformed frame.
  StreamReport run(ByteSource& in, ByteSink* acks = nullptr);
  // Stops before the next frame. A reader blocked in read() returns once the source does.
  void request_abort() { abort_.store(true); }
  std::uint64_t accepted() const { return accepted_.load(); }

 private:
  core::Octree& tree_;
  StreamOptions opt_;
  std::atomic<bool> abort_{false};
  std::atomic<std::uint64_t> accepted_{0};
};

// Fraction of (voxel, channel) samples of the volume inserted so far.
double construction_progress(const core::Octree& tree);

}  // namespace voxstream::ingest
