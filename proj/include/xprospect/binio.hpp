#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "xprospect/error.hpp"

namespace xprospect::binio {

// Little-endian primitive encoding shared by the XVOL1, XIMG1 and XCKPT1 formats.

class Writer {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put_le(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_le(bits);
  }
  const std::string& buffer() const { return buf_; }

 private:
  template <typename T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(get_le<std::uint8_t>(what)); }
  std::uint16_t u16(const char* what) { return get_le<std::uint16_t>(what); }
  std::uint32_t u32(const char* what) { return get_le<std::uint32_t>(what); }
  float f32(const char* what) {
    const std::uint32_t bits = get_le<std::uint32_t>(what);
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::vector<float> f32_array(std::uint64_t count, const char* what) {
    if (count > remaining() / 4) {
      throw FormatError(std::string("truncated ") + what + ": need " + std::to_string(count) +
                            " floats, " + std::to_string(remaining() / 4) + " present",
                        pos_);
    }
    std::vector<float> out(count);
    for (auto& f : out) f = f32(what);
    return out;
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw FormatError(std::string("truncated ") + what, pos_);
  }
  template <typename T>
  T get_le(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i));
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string_view data_;
  std::uint64_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace xprospect::binio
