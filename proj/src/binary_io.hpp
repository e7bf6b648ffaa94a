#pragma once

// Little-endian blob helpers shared by the dataset and bundle formats.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "eebt/error.hpp"

namespace eebt::io {

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + p.string());
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + p.string());
  return in;
}

template <class T>
void write_values(std::ostream& out, std::span<const T> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (T v : values) {
      T le = to_little(v);
      out.write(reinterpret_cast<const char*>(&le), sizeof(T));
    }
  }
}

template <class T>
void read_values(std::istream& in, std::span<T> values,
                 const std::filesystem::path& p) {
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size_bytes()));
  if (in.gcount() != static_cast<std::streamsize>(values.size_bytes())) {
    throw FormatError("truncated blob: " + p.string());
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& v : values) v = to_little(v);
  }
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint32_t read_u32(std::istream& in, const std::filesystem::path& p) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (in.gcount() != sizeof v) throw FormatError("truncated header: " + p.string());
  return to_little(v);
}

inline void expect_magic(std::istream& in, const char (&magic)[8],
                         const std::filesystem::path& p) {
  char buf[8] = {};
  in.read(buf, 8);
  if (in.gcount() != 8 || std::memcmp(buf, magic, 8) != 0) {
    throw FormatError("bad magic in " + p.string() + " (expected " +
                      std::string(magic, 8) + ")");
  }
}

inline void expect_file_size(const std::filesystem::path& p,
                             std::uint64_t expected) {
  std::error_code ec;
  const auto actual = std::filesystem::file_size(p, ec);
  if (ec) throw IoError("cannot stat " + p.string() + ": " + ec.message());
  if (actual != expected) {
    throw FormatError("length mismatch in " + p.string() + ": expected " +
                      std::to_string(expected) + " bytes, found " +
                      std::to_string(actual));
  }
}

inline void finish(std::ofstream& out, const std::filesystem::path& p) {
  out.flush();
  if (!out) throw IoError("write failed: " + p.string());
}

// 64-bit FNV-1a.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= bytes[i];
      hash_ *= 0x100000001B3ULL;
    }
  }
  template <class T>
  void update(std::span<const T> values) {
    for (T v : values) {
      T le = to_little(v);
      update(&le, sizeof le);
    }
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xCBF29CE484222325ULL;
};

}  // namespace eebt::io
