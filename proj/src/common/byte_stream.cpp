// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#include "voxstream/common/byte_stream.hpp"

#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

#include "voxstream/common/types.hpp"

namespace voxstream {

bool ByteSource::read_exact(std::span<std::byte> dst) {
  std::size_t got = 0;
  while (got < dst.size()) {
    const std::size_t n = read(dst.subspan(got));
    if (n == 0) return false;
    got += n;
  }
  return true;
}

std::size_t IstreamSource::read(std::span<std::byte> dst) {
  if (dst.empty()) return 0;
  in_.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(dst.size()));
  return static_cast<std::size_t>(in_.gcount());
}

void OstreamSink::write(std::span<const std::byte> src) {
  out_.write(reinterpret_cast<const char*>(src.data()), static_cast<std::streamsize>(src.size()));
  if (!out_) throw IoError("stream write failed");
}

void OstreamSink::flush() { out_.flush(); }

std::size_t FdSource::read(std::span<std::byte> dst) {
  for (;;) {
    const ssize_t n = ::read(fd_, dst.data(), dst.size());
    if (n >= 0) return static_cast<std::size_t>(n);
    if (errno != EINTR) throw IoError(std::string("read failed: ") + std::strerror(errno));
  }
}

void FdSink::write(std::span<const std::byte> src) {
  std::size_t done = 0;
  while (done < src.size()) {
    const ssize_t n = ::write(fd_, src.data() + done, src.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("write failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

std::size_t MemoryPipe::read(std::span<std::byte> dst) {
  std::unique_lock lk(m_);
  cv_.wait(lk, [&] { return closed_ || !buf_.empty(); });
  const std::size_t n = std::min(dst.size(), buf_.size());
  std::copy_n(buf_.begin(), n, dst.begin());
  buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(n));
  cv_.notify_all();
  return n;
}

void MemoryPipe::write(std::span<const std::byte> src) {
  std::size_t done = 0;
  while (done < src.size()) {
    std::unique_lock lk(m_);
    cv_.wait(lk, [&] { return closed_ || buf_.size() < capacity_; });
    if (closed_) throw IoError("write to a closed pipe");
    const std::size_t n = std::min(src.size() - done, capacity_ - buf_.size());
    buf_.insert(buf_.end(), src.begin() + static_cast<std::ptrdiff_t>(done),
                src.begin() + static_cast<std::ptrdiff_t>(done + n));
    done += n;
    cv_.notify_all();
  }
}

void MemoryPipe::close() {
  std::lock_guard lk(m_);
  closed_ = true;
  cv_.notify_all();
}

std::uint32_t crc32_of(std::span<const std::byte> data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = reinterpret_cast<const Bytef*>(data.data());
  std::size_t left = data.size();
  while (left > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(left, std::numeric_limits<uInt>::max()));
    crc = crc32(crc, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace voxstream
