#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace lasp {

// 64-bit FNV-1a. Used for scene fingerprints and definition hashes; not cryptographic.
class Fnv1a {
 public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= kPrime;
    }
    update_raw(0xff);  // field separator
  }
  void update(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) update_raw(static_cast<unsigned char>(v >> (8 * b)));
  }
  std::uint64_t digest() const { return state_; }

 private:
  void update_raw(unsigned char c) {
    state_ ^= c;
    state_ *= kPrime;
  }
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string to_hex(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int k = 15; k >= 0; --k, v >>= 4) out[k] = digits[v & 0xf];
  return out;
}

}  // namespace lasp
