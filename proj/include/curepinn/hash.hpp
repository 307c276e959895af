#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace curepinn {

/// FNV-1a 64-bit accumulator. Used for cache keys and report hashes; not
/// cryptographic.
class Fnv1a {
public:
  void add(std::string_view text) {
    for (unsigned char c : text) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
  }

  std::uint64_t value() const { return state_; }

  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(state_));
    return buf;
  }

private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace curepinn
