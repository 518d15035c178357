#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "memcap/linalg.hpp"
#include "memcap/rng.hpp"

namespace memcap::testing {

inline Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

inline Vector gaussian_vec(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Vector v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

inline std::filesystem::path mnist_dir() { return MEMCAP_MNIST_DIR; }

inline bool have_mnist() {
  return std::filesystem::exists(mnist_dir() / "train-images-idx3-ubyte.gz");
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("memcap_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace memcap::testing
