// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "voxstream/common/types.hpp"

namespace voxstream {

// Little-endian encoder for file headers and wire frames.
class ByteWriter {
 public:
  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(std::span<const std::byte> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void put_magic(const char (&m)[5]) {
    for (int i = 0; i < 4; ++i) put<char>(m[i]);
  }

  std::vector<std::byte>& bytes() { return buf_; }
  const std::vector<std::byte>& bytes() const { return buf_; }
  std::size_t size() const { return buf_.size(); }

 private:
  std::vector<std::byte> buf_;
};

// Bounds-checked decoder; throws FormatError on truncated input.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> data) : data_(data) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::byte> get_bytes(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool magic(const char (&m)[5]) {
    need(4);
    const bool ok = std::memcmp(data_.data() + pos_, m, 4) == 0;
    pos_ += 4;
    return ok;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("unexpected end of data");
  }
  std::span<const std::byte> data_;
  std::size_t pos_ = 0;
};

}  // namespace voxstream
