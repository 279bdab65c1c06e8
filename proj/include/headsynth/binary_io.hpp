#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

#include "headsynth/common.hpp"

namespace headsynth::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written by memcpy");

inline void write_magic(std::ostream& os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f32(std::ostream& os, float v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f32s(std::ostream& os, std::span<const float> values) {
  os.write(reinterpret_cast<const char*>(values.data()),
           static_cast<std::streamsize>(values.size_bytes()));
}

inline void write_f64s(std::ostream& os, std::span<const double> values) {
  os.write(reinterpret_cast<const char*>(values.data()),
           static_cast<std::streamsize>(values.size_bytes()));
}

inline void expect_magic(std::istream& is, std::string_view magic, const std::string& what) {
  std::string got(magic.size(), '\0');
  is.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!is || got != magic) {
    throw ParseError(what + ": bad magic at byte 0 (expected '" + std::string(magic) + "')");
  }
}

inline std::uint32_t read_u32(std::istream& is, const std::string& what) {
  const auto offset = static_cast<long long>(is.tellg());
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw ParseError(what + ": truncated header at byte " + std::to_string(offset));
  return v;
}

inline float read_f32(std::istream& is, const std::string& what) {
  const auto offset = static_cast<long long>(is.tellg());
  float v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw ParseError(what + ": truncated at byte " + std::to_string(offset));
  return v;
}

inline void read_f32s(std::istream& is, std::span<float> out, const std::string& what) {
  const auto offset = static_cast<long long>(is.tellg());
  is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes()));
  if (!is) {
    throw ParseError(what + ": truncated payload starting at byte " + std::to_string(offset) +
                     " (expected " + std::to_string(out.size_bytes()) + " bytes)");
  }
}

inline void read_f64s(std::istream& is, std::span<double> out, const std::string& what) {
  const auto offset = static_cast<long long>(is.tellg());
  is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes()));
  if (!is) {
    throw ParseError(what + ": truncated payload starting at byte " + std::to_string(offset) +
                     " (expected " + std::to_string(out.size_bytes()) + " bytes)");
  }
}

}  // namespace headsynth::binio
