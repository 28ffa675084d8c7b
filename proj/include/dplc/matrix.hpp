#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dplc {

// Row-major dense matrix, used for covariate batches and small linear algebra.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
  std::span<double> row(std::size_t i) { return {v.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {v.data() + i * cols, cols}; }
};

}  // namespace dplc
