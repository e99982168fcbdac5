// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mgt/error.hpp"

namespace mgt::detail {

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_magic(std::vector<std::uint8_t>& out, std::string_view magic) {
  out.insert(out.end(), magic.begin(), magic.end());
}

/// Bounds-checked little-endian reader; every failure reports its offset.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::size_t offset = 0)
      : bytes_(bytes), offset_(offset) {}

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw FormatError(std::string("truncated ") + what, offset_);
  }

  void expect_magic(std::string_view magic) {
    need(magic.size(), "magic");
    if (std::memcmp(bytes_.data() + offset_, magic.data(), magic.size()) != 0) {
      throw FormatError("bad magic, expected \"" + std::string(magic) + "\"", offset_);
    }
    offset_ += magic.size();
  }

  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[offset_++];
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[offset_ + i]) << (8 * i);
    offset_ += 4;
    return v;
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[offset_ + i]) << (8 * i);
    offset_ += 8;
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(offset_, n);
    offset_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t offset_;
};

}  // namespace mgt::detail
