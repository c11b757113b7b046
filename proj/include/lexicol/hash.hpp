#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <string_view>

namespace lexicol {

/// Incremental 64-bit FNV-1a over the little-endian bytes of fed values.
class ContentHash {
public:
  void bytes(const void* data, std::size_t size) noexcept {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001B3ULL;
    }
  }

  void u64(std::uint64_t v) noexcept {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }

  void f64(double v) noexcept { u64(std::bit_cast<std::uint64_t>(v)); }

  void text(std::string_view s) noexcept {
    u64(s.size());
    bytes(s.data(), s.size());
  }

  template <typename T>
  void u64_range(std::span<const T> values) noexcept {
    u64(values.size());
    for (const T& v : values) u64(static_cast<std::uint64_t>(v));
  }

  std::uint64_t value() const noexcept { return state_; }

  std::string hex() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << state_;
    return os.str();
  }

private:
  std::uint64_t state_ = 0xCBF29CE484222325ULL;
};

}  // namespace lexicol
