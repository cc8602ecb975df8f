#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "mipruner/gram_kernel.hpp"
#include "mipruner/random.hpp"

namespace mipruner::fixtures {

inline Matrix gaussian_matrix(Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

inline ActivationMatrix as_activations(Matrix values, std::string layer = "test.fc1") {
  ActivationMatrix a;
  a.values = std::move(values);
  a.layer_id = std::move(layer);
  return a;
}

/// Column pair (x, rho x + sqrt(1 - rho^2) e) from standard normals.
inline Matrix correlated_pair(Rng& rng, Index n, double rho) {
  Matrix m(n, 2);
  for (Index i = 0; i < n; ++i) {
    const double x = rng.normal();
    m(i, 0) = x;
    m(i, 1) = rho * x + std::sqrt(1.0 - rho * rho) * rng.normal();
  }
  return m;
}

/// Scratch directory unique to the calling test, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mipruner_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace mipruner::fixtures
