#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace faithcheck {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = kFnvOffset) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::string to_hex(std::uint64_t value, int digits = 16);

// Order-sensitive digest over several fields; a 0x1f separator keeps
// ("ab","c") and ("a","bc") apart.
class Digest {
 public:
  Digest& add(std::string_view field) {
    h_ = fnv1a(field, h_);
    h_ = fnv1a("\x1f", h_);
    return *this;
  }
  std::uint64_t value() const { return h_; }
  std::string hex() const { return to_hex(h_); }

 private:
  std::uint64_t h_ = kFnvOffset;
};

}  // namespace faithcheck
