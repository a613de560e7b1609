#pragma once

// Little-endian scalar packing shared by the feature-file and checkpoint
// readers/writers. Explicit byte shuffling keeps the formats independent of
// host endianness.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

namespace lftd::detail {

inline void store_u16le(unsigned char* p, std::uint16_t v) {
  p[0] = static_cast<unsigned char>(v & 0xff);
  p[1] = static_cast<unsigned char>((v >> 8) & 0xff);
}

inline void store_u32le(unsigned char* p, std::uint32_t v) {
  p[0] = static_cast<unsigned char>(v & 0xff);
  p[1] = static_cast<unsigned char>((v >> 8) & 0xff);
  p[2] = static_cast<unsigned char>((v >> 16) & 0xff);
  p[3] = static_cast<unsigned char>((v >> 24) & 0xff);
}

inline std::uint16_t load_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t load_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void store_f32le(unsigned char* p, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  store_u32le(p, bits);
}

inline float load_f32le(const unsigned char* p) {
  const std::uint32_t bits = load_u32le(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

inline void write_u16le(std::ostream& os, std::uint16_t v) {
  unsigned char b[2];
  store_u16le(b, v);
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline void write_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  store_u32le(b, v);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_f32le(std::ostream& os, float f) {
  unsigned char b[4];
  store_f32le(b, f);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool read_exact(std::istream& is, void* dst, std::size_t n) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(is.gcount()) == n;
}

}  // namespace lftd::detail
