#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "error.hpp"

namespace wsnad::binio {

template <typename Float, typename Bits>
void write_le(const std::filesystem::path& path, const std::vector<double>& values) {
  std::vector<unsigned char> bytes(values.size() * sizeof(Bits));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Bits bits = std::bit_cast<Bits>(static_cast<Float>(values[i]));
    for (std::size_t b = 0; b < sizeof(Bits); ++b)
      bytes[i * sizeof(Bits) + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kInput, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kInput, "short write to " + path.string());
}

/// Reads exactly `count` values; a short file raises `short_code`.
template <typename Float, typename Bits>
std::vector<double> read_le(const std::filesystem::path& path, std::size_t count, ErrorCode short_code) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(short_code, "cannot open " + path.string());
  std::vector<unsigned char> bytes(count * sizeof(Bits));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    fail(short_code, path.string() + ": expected " + std::to_string(bytes.size()) + " bytes, got " +
                         std::to_string(in.gcount()));
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    Bits bits = 0;
    for (std::size_t b = 0; b < sizeof(Bits); ++b)
      bits |= static_cast<Bits>(bytes[i * sizeof(Bits) + b]) << (8 * b);
    values[i] = static_cast<double>(std::bit_cast<Float>(bits));
  }
  return values;
}

inline void write_f32(const std::filesystem::path& p, const std::vector<double>& v) {
  write_le<float, std::uint32_t>(p, v);
}
inline void write_f64(const std::filesystem::path& p, const std::vector<double>& v) {
  write_le<double, std::uint64_t>(p, v);
}
inline std::vector<double> read_f32(const std::filesystem::path& p, std::size_t n, ErrorCode code) {
  return read_le<float, std::uint32_t>(p, n, code);
}
inline std::vector<double> read_f64(const std::filesystem::path& p, std::size_t n, ErrorCode code) {
  return read_le<double, std::uint64_t>(p, n, code);
}

}  // namespace wsnad::binio
