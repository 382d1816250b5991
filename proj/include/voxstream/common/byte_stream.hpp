// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <mutex>
#include <span>

namespace voxstream {

// Blocking byte source. read returns 0 only at end of stream.
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  virtual std::size_t read(std::span<std::byte> dst) = 0;
  // Reads exactly dst.size() bytes; false if the stream ended first.
  bool read_exact(std::span<std::byte> dst);
};

class ByteSink {
 public:
  virtual ~ByteSink() = default;
  // Throws IoError.
  virtual void write(std::span<const std::byte> src) = 0;
  virtual void flush() {}
};

class IstreamSource final : public ByteSource {
 public:
  explicit IstreamSource(std::istream& in) : in_(in) {}
  std::size_t read(std::span<std::byte> dst) override;

 private:
  std::istream& in_;
};

class OstreamSink final : public ByteSink {
 public:
  explicit OstreamSink(std::ostream& out) : out_(out) {}
  void write(std::span<const std::byte> src) override;
  void flush() override;

 private:
  std::ostream& out_;
};

// POSIX file descriptor (pipe or socket); not owned.
class FdSource final : public ByteSource {
 public:
  explicit FdSource(int fd) : fd_(fd) {}
  std::size_t read(std::span<std::byte> dst) override;

 private:
  int fd_;
};

class FdSink final : public ByteSink {
 public:
  explicit FdSink(int fd) : fd_(fd) {}
  void write(std::span<const std::byte> src) override;

 private:
  int fd_;
};

// In-process pipe with a bounded buffer; write blocks while full.
class MemoryPipe final : public ByteSource, public ByteSink {
 public:
  explicit MemoryPipe(std::size_t capacity = std::size_t{1} << 20) : capacity_(capacity) {}
  std::size_t read(std::span<std::byte> dst) override;
  void write(std::span<const std::byte> src) override;
  // Readers see end of stream once the buffer drains.
  void close();

 private:
  const std::size_t capacity_;
  std::mutex m_;
  std::condition_variable cv_;
  std::deque<std::byte> buf_;
  bool closed_ = false;
};

// zlib CRC-32 of a byte range.
std::uint32_t crc32_of(std::span<const std::byte> data);

}  // namespace voxstream
