#pragma once

// Little-endian encoding helpers for the index and encoder file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "polyqa/error.hpp"

namespace polyqa::binary {

class Writer {
 public:
  void bytes(std::string_view s) { buf_.append(s); }

  template <class UInt>
  void uint(UInt v) {
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
      buf_.push_back(static_cast<char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xFF));
    }
  }

  void f32(float v) { uint(std::bit_cast<uint32_t>(v)); }

  const std::string& data() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class TruncatedError : public DataError {
 public:
  explicit TruncatedError(const std::string& what) : DataError("truncated: " + what) {}
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  template <class UInt>
  UInt uint(const char* what) {
    need(sizeof(UInt), what);
    uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
      v |= static_cast<uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(UInt);
    return static_cast<UInt>(v);
  }

  float f32(const char* what) { return std::bit_cast<float>(uint<uint32_t>(what)); }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) throw TruncatedError(what);
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace polyqa::binary
