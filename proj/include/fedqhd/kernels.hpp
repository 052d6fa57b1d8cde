#pragma once

// Dense products used on the hot paths (anchor Grams, ridge right-hand sides,
// batched Q evaluation).
//
// Every kernel exists twice:
//   serial::   textbook loops, kept as the reference the tests compare against;
//   parallel:: blocked, vectorizable loops distributed over OpenMP threads.
// Each output entry of a parallel kernel is accumulated by exactly one thread
// in a fixed order, so results do not depend on the thread count.

#include <cstddef>

#include "fedqhd/linalg.hpp"

namespace fedqhd::kernels {

/// Inner product with eight independent accumulators (vectorizes without
/// -ffast-math; the summation order is fixed).
inline double dot(const double* x, const double* y, std::size_t n) noexcept {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t l = 0; l < 8; ++l) acc[l] += x[i + l] * y[i + l];
  double tail = 0.0;
  for (; i < n; ++i) tail += x[i] * y[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) +
         tail;
}

inline void axpy(double a, const double* x, double* y, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b);     // A B
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // A^T B
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // A B^T
Matrix gram_cols(const Matrix& x);                   // X^T X
Matrix gram_rows(const Matrix& x);                   // X X^T

}  // namespace serial

namespace parallel {

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix gram_cols(const Matrix& x);
Matrix gram_rows(const Matrix& x);

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads() noexcept;

}  // namespace parallel

// The library calls the parallel versions.
using parallel::gram_cols;
using parallel::gram_rows;
using parallel::matmul;
using parallel::matmul_nt;
using parallel::matmul_tn;

}  // namespace fedqhd::kernels
