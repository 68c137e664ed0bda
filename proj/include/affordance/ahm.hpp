#pragma once

// AHM1 affordance-map container: "AHM1", u32 width, u32 height, then
// width*height f32 values, all little-endian, row-major.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "affordance/types.hpp"

namespace affordance::ahm {

inline constexpr std::array<char, 4> kMagic{'A', 'H', 'M', '1'};
inline constexpr std::size_t kHeaderBytes = 12;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((x >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const Grid<float>& map) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 4 * map.size());
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  detail::put_u32(out, static_cast<std::uint32_t>(map.width()));
  detail::put_u32(out, static_cast<std::uint32_t>(map.height()));
  for (float x : map.values()) detail::put_u32(out, std::bit_cast<std::uint32_t>(x));
  return out;
}

inline Grid<float> decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic.data(), 4) != 0) {
    throw Error(Errc::parse, "not an AHM1 file (bad magic)");
  }
  const std::uint32_t width = detail::get_u32(bytes.data() + 4);
  const std::uint32_t height = detail::get_u32(bytes.data() + 8);
  if (width == 0 || height == 0 || width > (1u << 16) || height > (1u << 16)) {
    throw Error(Errc::parse, "AHM1 dimensions out of range");
  }
  const std::size_t count = static_cast<std::size_t>(width) * height;
  if (bytes.size() != kHeaderBytes + 4 * count) {
    throw Error(Errc::parse, "AHM1 payload size does not match header");
  }
  std::vector<float> values(count);
  const std::uint8_t* p = bytes.data() + kHeaderBytes;
  for (std::size_t i = 0; i < count; ++i, p += 4) values[i] = std::bit_cast<float>(detail::get_u32(p));
  return Grid<float>(static_cast<int>(width), static_cast<int>(height), std::move(values));
}

inline void write(const std::filesystem::path& path, const Grid<float>& map) {
  const auto bytes = encode(map);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::io, "write failed: " + path.string());
}

inline void write(const std::filesystem::path& path, const Heatmap& map) {
  write(path, map.cast<float>());
}

inline Grid<float> read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

/// Reads an AHM1 file as a heatmap, enforcing the heatmap invariants.
inline Heatmap read(const std::filesystem::path& path) {
  Heatmap map = read_raw(path).cast<double>();
  check_heatmap(map);
  return map;
}

}  // namespace affordance::ahm
