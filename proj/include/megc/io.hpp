// SPDX-License-Identifier: Apache-2.0
//
// File helpers and little-endian binary encoding shared by the containers.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace megc::io {

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

class ByteWriter {
 public:
  void u8(std::uint8_t v);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void f32(float v);
  void bytes(std::string_view s);
  /// u16 length prefix followed by the raw bytes.
  void string16(std::string_view s);

  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

/// Bounds-checked reader; throws FormatError on truncated input.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  float f32();
  std::string_view bytes(std::size_t n);
  std::string string16();

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace megc::io
