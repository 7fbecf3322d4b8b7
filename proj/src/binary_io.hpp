#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

namespace sasv::detail {

// Fixed little-endian encoding regardless of host byte order.
template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
bool get_le(std::istream& in, U& value) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) return false;
  value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    value |= static_cast<U>(bytes[i]) << (8 * i);
  return true;
}

inline void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

inline bool get_f32(std::istream& in, float& v) {
  std::uint32_t bits;
  if (!get_le(in, bits)) return false;
  v = std::bit_cast<float>(bits);
  return true;
}

inline bool get_f64(std::istream& in, double& v) {
  std::uint64_t bits;
  if (!get_le(in, bits)) return false;
  v = std::bit_cast<double>(bits);
  return true;
}

}  // namespace sasv::detail
