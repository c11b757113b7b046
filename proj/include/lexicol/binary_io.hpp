#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <string_view>

#include "lexicol/core.hpp"

// Little-endian scalar encoding and atomic file replacement helpers.

namespace lexicol::io {

template <typename T>
void write_le(std::ostream& os, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  const U bits = std::bit_cast<U>(value);
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  os.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& what) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T)))
    throw FormatError(what + ": unexpected end of file");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(buf[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

inline void expect_magic(std::istream& is, std::string_view magic, const std::string& what) {
  std::string got(magic.size(), '\0');
  if (!is.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic)
    throw FormatError(what + ": bad magic, expected '" + std::string(magic) + "'");
}

inline void expect_end(std::istream& is, const std::string& what) {
  if (is.peek() != std::char_traits<char>::eof())
    throw FormatError(what + ": trailing bytes after payload");
}

/// Guards allocations driven by header fields: `count` items of `item_bytes`
/// must fit in what is left of the stream.
inline void expect_available(std::istream& is, std::uint64_t count, std::size_t item_bytes,
                             const std::string& what) {
  const auto here = is.tellg();
  is.seekg(0, std::ios::end);
  const auto end = is.tellg();
  is.seekg(here);
  const auto left = static_cast<std::uint64_t>(end - here);
  if (item_bytes != 0 && count > left / item_bytes) throw FormatError(what + ": truncated payload");
}

inline std::ifstream open_in(const std::filesystem::path& p, bool binary) {
  std::ifstream in(p, binary ? std::ios::binary : std::ios::in);
  if (!in) throw FormatError(p.string() + ": cannot open file");
  return in;
}

/// Writes via `writer(std::ostream&)` into a sibling temp file, then renames
/// it over `target`, so readers never observe a partial file.
template <typename Writer>
void write_atomically(const std::filesystem::path& target, Writer&& writer) {
  namespace fs = std::filesystem;
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  std::random_device rd;
  const fs::path tmp =
      target.string() + ".tmp" + std::to_string((static_cast<std::uint64_t>(rd()) << 32) | rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(tmp.string() + ": cannot open for writing");
    writer(out);
    out.flush();
    if (!out) throw Error(tmp.string() + ": write failed");
  }
  fs::rename(tmp, target);
}

}  // namespace lexicol::io
