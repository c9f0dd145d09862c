#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string_view>

#include "relforge/errors.hpp"

namespace relforge {

// FNV-1a, used for run-to-run content comparison of emitted artifacts.
inline std::uint64_t fnv1a(std::string_view data,
                           std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t hash = seed;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::uint64_t fnv1a_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for hashing: " + path.string());
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buffer[1 << 16];
  while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0)
    hash = fnv1a(std::string_view(buffer, static_cast<std::size_t>(in.gcount())), hash);
  return hash;
}

}  // namespace relforge
