#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "kamg/tensor.hpp"

namespace kamg {

// FNV-1a, 64-bit.
inline uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xCBF29CE484222325ULL) {
  const auto* p = static_cast<const uint8_t*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

inline uint64_t tensor_digest(const Tensor& t) {
  uint64_t h = fnv1a64(t.shape().data(), t.shape().size() * sizeof(int64_t));
  return fnv1a64(t.data(), static_cast<size_t>(t.numel()) * sizeof(double), h);
}

std::string hex_u64(uint64_t v);

uint64_t file_digest(const std::string& path);

}  // namespace kamg
