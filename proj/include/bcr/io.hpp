#pragma once

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bcr/core.hpp"

namespace bcr {

// Flat binary matrix: 16-byte header (4-byte magic, u32 rows, u32 cols,
// 4 reserved zero bytes) followed by little-endian f64 values, row-major.
namespace binfmt {

inline constexpr std::array<char, 4> kMatrixMagic{'B', 'C', 'R', 'M'};
inline constexpr std::array<char, 4> kVaeMagic{'B', 'C', 'R', 'V'};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("binary: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((bits >> (8 * k)) & 0xff);
  out.write(b, 8);
}

inline double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw IoError("binary: truncated payload");
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void write(std::ostream& out, const Matrix& m, const std::array<char, 4>& magic = kMatrixMagic) {
  if (m.rows() > 0xffffffffULL || m.cols() > 0xffffffffULL) throw IoError("binary: matrix too large");
  out.write(magic.data(), 4);
  detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  detail::put_u32(out, 0);
  for (double v : m.data()) detail::put_f64(out, v);
}

inline Matrix read(std::istream& in, const std::array<char, 4>& magic = kMatrixMagic) {
  char got[4];
  if (!in.read(got, 4)) throw IoError("binary: truncated header");
  if (std::memcmp(got, magic.data(), 4) != 0)
    throw IoError("binary: bad magic, expected '" + std::string(magic.data(), 4) + "'");
  const auto rows = detail::get_u32(in);
  const auto cols = detail::get_u32(in);
  detail::get_u32(in);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = detail::get_f64(in);
  return m;
}

inline void save(const std::string& path, const Matrix& m, const std::array<char, 4>& magic = kMatrixMagic) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("binary: cannot write '" + path + "'");
  write(out, m, magic);
}

inline Matrix load(const std::string& path, const std::array<char, 4>& magic = kMatrixMagic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("binary: cannot open '" + path + "'");
  return read(in, magic);
}

}  // namespace binfmt

// 64-bit FNV-1a, used for config and artifact fingerprints.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::string file_hash(const std::string& path) { return hex64(fnv1a(read_file(path))); }

}  // namespace bcr
