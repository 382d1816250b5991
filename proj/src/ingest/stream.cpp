// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/ingest/stream.hpp"

#include <chrono>
#include <exception>
#include <memory>
#include <sstream>
#include <thread>

#include "voxstream/common/bounded_queue.hpp"
#include "voxstream/common/bytes.hpp"

namespace voxstream::ingest {

namespace {

constexpr std::uint32_t kMaxDescriptorBytes = 1u << 16;

template <class T>
T load(const std::byte* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

// A failed ack write closes the ack channel; the slab stream itself is unaffected.
void send_ack(ByteSink*& acks, bool ok, std::uint64_t seq, StreamError e) {
  if (!acks) return;
  ByteWriter w;
  w.put<std::uint8_t>(ok ? kAck : kNack);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(seq));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(e));
  try {
    acks->write(w.bytes());
    acks->flush();
  } catch (const IoError&) {
    acks = nullptr;
  }
}

struct Slab {
  Vec3u origin, dims;
  std::vector<std::byte> payload;
};

}  // namespace

const char* to_string(StreamError e) {
  switch (e) {
    case StreamError::None: return "none";
    case StreamError::BadMagic: return "bad magic";
    case StreamError::BadVersion: return "unsupported version";
    case StreamError::BadDescriptor: return "bad descriptor";
    case StreamError::Truncated: return "truncated frame";
    case StreamError::BadChecksum: return "payload checksum mismatch";
    case StreamError::OversizedSlab: return "slab larger than the volume";
    case StreamError::OutOfBounds: return "slab outside the volume";
    case StreamError::BadChannel: return "channel out of range";
    case StreamError::DescriptorMismatch: return "descriptor does not match the tree";
  }
  return "unknown";
}

const char* to_string(StreamEnd e) {
  switch (e) {
    case StreamEnd::End: return "end";
    case StreamEnd::Abort: return "abort";
    case StreamEnd::Stopped: return "stopped";
    case StreamEnd::Eof: return "eof";
    case StreamEnd::Malformed: return "malformed";
  }
  return "unknown";
}

std::string StreamReport::summary() const {
  std::ostringstream out;
  out << "end=" << to_string(end) << " frames=" << frames << " accepted=" << accepted << " rejected=" << rejected
      << " payload_bytes=" << payload_bytes << " time_s=" << seconds;
  if (error != StreamError::None) out << " error=\"" << to_string(error) << '"';
  return out.str();
}

void StreamWriter::header(const core::VolumeDescriptor& desc) {
  ByteWriter body;
  core::encode_descriptor(body, desc);
  ByteWriter w;
  w.put_magic("VSTR");
  w.put<std::uint16_t>(kStreamVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(body.size()));
  w.put_bytes(body.bytes());
  out_.write(w.bytes());
}

void StreamWriter::slab(int channel, const Vec3u& origin, const Vec3u& dims, std::span<const std::byte> payload) {
  ByteWriter w;
  w.put<std::uint16_t>(static_cast<std::uint16_t>(channel));
  for (int a = 0; a < 3; ++a) w.put<std::uint32_t>(origin[a]);
  for (int a = 0; a < 3; ++a) w.put<std::uint32_t>(dims[a]);
  w.put<std::uint32_t>(crc32_of(payload));
  out_.write(w.bytes());
  out_.write(payload);
}

void StreamWriter::slab(int channel, const Vec3u& origin, const Vec3u& dims, std::span<const std::uint16_t> values,
                        SampleFormat format) {
  ByteWriter w;
  for (std::uint16_t v : values) {
    if (format == SampleFormat::U8) {
      w.put<std::uint8_t>(static_cast<std::uint8_t>(v));
    } else {
      w.put<std::uint16_t>(v);
    }
  }
  slab(channel, origin, dims, w.bytes());
}

void StreamWriter::end() {
  ByteWriter w;
  w.put<std::uint16_t>(kEndFrame);
  out_.write(w.bytes());
  out_.flush();
}

void StreamWriter::abort() {
  ByteWriter w;
  w.put<std::uint16_t>(kAbortFrame);
  out_.write(w.bytes());
  out_.flush();
}

core::VolumeDescriptor read_stream_header(ByteSource& in) {
  std::byte head[10];
  if (!in.read_exact(head)) throw StreamFormatError(StreamError::Truncated, "stream ended inside the header");
  if (std::memcmp(head, "VSTR", 4) != 0) throw StreamFormatError(StreamError::BadMagic, "not a VSTR stream");
  const auto version = load<std::uint16_t>(head + 4);
  if (version != kStreamVersion)
    throw StreamFormatError(StreamError::BadVersion, "unsupported VSTR version " + std::to_string(version));
  const auto len = load<std::uint32_t>(head + 6);
  if (len > kMaxDescriptorBytes) throw StreamFormatError(StreamError::BadDescriptor, "descriptor too large");
  std::vector<std::byte> body(len);
  if (!in.read_exact(body)) throw StreamFormatError(StreamError::Truncated, "stream ended inside the descriptor");
  try {
    ByteReader r(body);
    core::VolumeDescriptor d = core::decode_descriptor(r);
    if (r.remaining() != 0) throw FormatError("trailing descriptor bytes");
    return d;
  } catch (const Error& e) {
    throw StreamFormatError(StreamError::BadDescriptor, e.what());
  }
}

std::optional<Ack> read_ack(ByteSource& in) {
  std::byte b[kAckBytes];
  if (!in.read_exact(b)) return std::nullopt;
  const auto status = load<std::uint8_t>(b);
  if (status != kAck && status != kNack) throw FormatError("bad acknowledgement status");
  return Ack{status == kAck, load<std::uint32_t>(b + 1), static_cast<StreamError>(load<std::uint16_t>(b + 5))};
}

StreamReport StreamIngestor::run(ByteSource& in, ByteSink* acks) {
  const auto start = std::chrono::steady_clock::now();
  const core::VolumeDescriptor& d = tree_.descriptor();
  const std::size_t sb = sample_bytes(d.format);
  StreamReport rep;

  std::vector<std::unique_ptr<BoundedQueue<Slab>>> queues;
  std::vector<std::exception_ptr> errors(std::size_t(d.channels));
  std::vector<std::thread> workers;
  for (int c = 0; c < d.channels; ++c) queues.push_back(std::make_unique<BoundedQueue<Slab>>(opt_.queue_depth));
  for (int c = 0; c < d.channels; ++c) {
    workers.emplace_back([&, c] {
      auto& q = *queues[std::size_t(c)];
      while (auto s = q.pop()) {
        if (errors[std::size_t(c)]) continue;
        try {
          tree_.insert_block_bytes(c, s->origin, s->dims, s->payload);
          ++accepted_;
        } catch (...) {
          errors[std::size_t(c)] = std::current_exception();
        }
      }
    });
  }

  auto malformed = [&](StreamError e) {
    rep.end = StreamEnd::Malformed;
    rep.error = e;
    send_ack(acks, false, rep.frames, e);
  };
  std::byte head[kSlabHeaderBytes];
  for (;;) {
    if (abort_.load()) {
      rep.end = StreamEnd::Stopped;
      break;
    }
    const std::size_t got = in.read(std::span(head, 2));
    if (got == 0) {
      rep.end = StreamEnd::Eof;
      break;
    }
    if (got == 1 && !in.read_exact(std::span(head + 1, 1))) {
      malformed(StreamError::Truncated);
      break;
    }
    const auto channel = load<std::uint16_t>(head);
    if (channel == kEndFrame || channel == kAbortFrame) {
      rep.end = channel == kEndFrame ? StreamEnd::End : StreamEnd::Abort;
      send_ack(acks, true, rep.frames, StreamError::None);
      break;
    }
    if (!in.read_exact(std::span(head + 2, kSlabHeaderBytes - 2))) {
      malformed(StreamError::Truncated);
      break;
    }
    Vec3u origin, dims;
    for (int a = 0; a < 3; ++a) {
      origin[a] = load<std::uint32_t>(head + 2 + 4 * a);
      dims[a] = load<std::uint32_t>(head + 14 + 4 * a);
    }
    const auto crc = load<std::uint32_t>(head + 26);
    // The payload size must be trusted before it is read; anything larger than the volume breaks framing.
    bool fits_volume = true;
    for (int a = 0; a < 3; ++a) fits_volume = fits_volume && dims[a] <= d.dims[a];
    if (!fits_volume) {
      malformed(StreamError::OversizedSlab);
      break;
    }
    Slab s{origin, dims, std::vector<std::byte>(voxel_count(dims) * sb)};
    if (!in.read_exact(s.payload)) {
      malformed(StreamError::Truncated);
      break;
    }
    const std::uint64_t seq = rep.frames++;
    rep.payload_bytes += s.payload.size();
    if (crc32_of(s.payload) != crc) {
      malformed(StreamError::BadChecksum);
      break;
    }
    StreamError reject = StreamError::None;
    if (channel >= d.channels) {
      reject = StreamError::BadChannel;
    } else {
      for (int a = 0; a < 3; ++a)
        if (std::uint64_t(origin[a]) + dims[a] > d.dims[a] || dims[a] == 0) reject = StreamError::OutOfBounds;
    }
    if (reject != StreamError::None) {
      ++rep.rejected;
      send_ack(acks, false, seq, reject);
      continue;
    }
    queues[channel]->push(std::move(s));
    send_ack(acks, true, seq, StreamError::None);
  }

  // Input cut off because of an abort request.
  if (abort_.load() && (rep.end == StreamEnd::Eof || rep.error == StreamError::Truncated)) {
    rep.end = StreamEnd::Stopped;
    rep.error = StreamError::None;
  }
  for (auto& q : queues) q->close();
  for (auto& t : workers) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  rep.accepted = accepted_.load();
  if (opt_.finalize) {
    tree_.mark_finished();
    tree_.fill_borders();
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

double construction_progress(const core::Octree& tree) {
  const core::VolumeDescriptor& d = tree.descriptor();
  const double total = double(voxel_count(d.dims)) * d.channels;
  const auto root = tree.node(0);
  if (!root || total <= 0.0) return 0.0;
  return 1.0 - double(root->unknown) / total;
}

}  // namespace voxstream::ingest
