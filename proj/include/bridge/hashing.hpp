#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <type_traits>

namespace bridge {

/// 64-bit FNV-1a, used for artifact fingerprints (not cryptographic).
class Fnv1a {
 public:
  void update(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      state_ ^= bytes[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view text) { update(text.data(), text.size()); }
  template <typename T>
    requires std::is_arithmetic_v<T>
  void update(T value) {
    update(&value, sizeof(value));
  }

  std::uint64_t digest() const { return state_; }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(state_));
    return buf;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string fnv1a_hex(std::string_view text) {
  Fnv1a h;
  h.update(text);
  return h.hex();
}

}  // namespace bridge
