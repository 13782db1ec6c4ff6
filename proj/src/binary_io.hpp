// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "seqpress/error.hpp"

namespace seqpress::detail {

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

class ByteWriter {
 public:
  void raw(const void* data, std::size_t n) { out_.append(static_cast<const char*>(data), n); }
  template <class T>
  void put(T v) {
    T le = to_little(v);
    raw(&le, sizeof(T));
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  void raw(void* dst, std::size_t n) {
    require(pos_ + n <= data_.size(), ErrorCode::InvalidFormat, "truncated binary file");
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T get() {
    T v;
    raw(&v, sizeof(T));
    return to_little(v);
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace seqpress::detail
