/* Copyright 2026 The kwsd2v Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Little-endian primitives shared by the checkpoint and feature-cache
// formats.

#ifndef KWSD2V_SRC_BINARY_IO_H_
#define KWSD2V_SRC_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kwsd2v::internal {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class ByteWriter {
 public:
  void U32(std::uint32_t v) { Raw(&v, 4); }
  void U64(std::uint64_t v) { Raw(&v, 8); }
  void Bytes(std::string_view s) { Raw(s.data(), s.size()); }
  void Str(std::string_view s) {
    U32(static_cast<std::uint32_t>(s.size()));
    Bytes(s);
  }
  void Floats(std::span<const float> v) { Raw(v.data(), v.size() * sizeof(float)); }

  const std::vector<char>& buffer() const { return buf_; }
  std::vector<char>& buffer() { return buf_; }

 private:
  void Raw(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::vector<char> buf_;
};

// Thrown by ByteReader on any out-of-bounds read.
class TruncatedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const char> data) : data_(data) {}

  std::uint32_t U32() {
    std::uint32_t v;
    Raw(&v, 4);
    return v;
  }
  std::uint64_t U64() {
    std::uint64_t v;
    Raw(&v, 8);
    return v;
  }
  std::string Bytes(std::size_t n) {
    Need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::string Str() { return Bytes(U32()); }
  void Floats(std::span<float> out) { Raw(out.data(), out.size() * sizeof(float)); }
  std::span<const char> Span(std::size_t n) {
    Need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void Need(std::size_t n) const {
    if (n > data_.size() - pos_) throw TruncatedError("unexpected end of data");
  }
  void Raw(void* p, std::size_t n) {
    Need(n);
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::span<const char> data_;
  std::size_t pos_ = 0;
};

}  // namespace kwsd2v::internal

#endif  // KWSD2V_SRC_BINARY_IO_H_
