// Copyright 2026 The stainfuse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Little-endian byte (de)serialization shared by the container formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stainfuse/errors.hpp"

namespace stainfuse {

class ByteWriter {
 public:
  void bytes(std::string_view raw) { buffer_.append(raw); }
  void u8(std::uint8_t v) { buffer_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put_le(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }

  const std::string& buffer() const { return buffer_; }
  std::string take() { return std::move(buffer_); }

 private:
  template <typename U>
  void put_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buffer_;
};

/// Sequential reader that reports the byte offset of any truncation.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(get_le<std::uint8_t>(what)); }
  std::uint16_t u16(const char* what) { return get_le<std::uint16_t>(what); }
  std::uint32_t u32(const char* what) { return get_le<std::uint32_t>(what); }
  std::uint64_t u64(const char* what) { return get_le<std::uint64_t>(what); }
  float f32(const char* what) { return std::bit_cast<float>(get_le<std::uint32_t>(what)); }
  double f64(const char* what) { return std::bit_cast<double>(get_le<std::uint64_t>(what)); }

  void expect_end(const char* container) const {
    if (pos_ != data_.size()) throw ParseError(std::string(container) + ": trailing bytes after payload", pos_);
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw ParseError(std::string("truncated input while reading ") + what, pos_);
  }
  template <typename U>
  U get_le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i));
    }
    pos_ += sizeof(U);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace stainfuse
