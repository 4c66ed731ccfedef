#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "xprospect/volume.hpp"

namespace xprospect::test {

inline std::vector<float> uniform_values(std::size_t n, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(n);
  for (auto& f : v) f = dist(rng);
  return v;
}

inline Volume3D random_unit_volume(std::size_t d, std::uint64_t seed) {
  return Volume3D(d, d, d, uniform_values(d * d * d, seed), Domain::Unit);
}

inline Image2D random_image(std::size_t d, View view, std::uint64_t seed) {
  return Image2D(d, d, uniform_values(d * d, seed), view);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("xprospect_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace xprospect::test
