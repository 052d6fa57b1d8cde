#include "fedqhd/kernels.hpp"

#include <algorithm>
#include <cstring>

#include "fedqhd/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fedqhd::kernels {

namespace {

void require(bool ok, const char* what, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw DimensionMismatch(std::string(what) + ": " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                            "x" + std::to_string(b.cols()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Reference kernels

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul", a, b);
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn", a, b);
  Matrix c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.rows(); ++p) s += a(p, i) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt", a, b);
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
      c(i, j) = s;
    }
  return c;
}

Matrix gram_cols(const Matrix& x) { return matmul_tn(x, x); }
Matrix gram_rows(const Matrix& x) { return matmul_nt(x, x); }

}  // namespace serial

// ---------------------------------------------------------------------------
// Blocked OpenMP kernels. Everything reduces to C (+)= A B^T with both
// operands row-major over the summed index.

namespace parallel {

namespace {

typedef double v8d __attribute__((vector_size(64)));

inline v8d load8(const double* p) noexcept {
  v8d v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline double hsum(v8d v) noexcept {
  return ((v[0] + v[4]) + (v[1] + v[5])) + ((v[2] + v[6]) + (v[3] + v[7]));
}

constexpr std::size_t kKc = 256;  // summed-index chunk
constexpr std::size_t kMb = 64;   // row block

// C[0..4)[0..4) += A[0..4) . B[0..4) over `len` entries.
inline void micro4x4(const double* a, std::size_t lda, const double* b, std::size_t ldb,
                     std::size_t len, double* c, std::size_t ldc) noexcept {
  v8d acc[4][4] = {};
  const double* a0 = a;
  const double* a1 = a + lda;
  const double* a2 = a + 2 * lda;
  const double* a3 = a + 3 * lda;
  const double* b0 = b;
  const double* b1 = b + ldb;
  const double* b2 = b + 2 * ldb;
  const double* b3 = b + 3 * ldb;
  std::size_t p = 0;
  for (; p + 8 <= len; p += 8) {
    const v8d va[4] = {load8(a0 + p), load8(a1 + p), load8(a2 + p), load8(a3 + p)};
    const v8d vb[4] = {load8(b0 + p), load8(b1 + p), load8(b2 + p), load8(b3 + p)};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) acc[i][j] += va[i] * vb[j];
  }
  const double* ar[4] = {a0, a1, a2, a3};
  const double* br[4] = {b0, b1, b2, b3};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double s = hsum(acc[i][j]);
      for (std::size_t q = p; q < len; ++q) s += ar[i][q] * br[j][q];
      c[i * ldc + j] += s;
    }
}

// C (m x n) += A (m x k) B^T (n x k) over summed range [k0, k1). When
// `upper` is set only tiles intersecting j >= i are computed.
void nt_chunk(const Matrix& a, const Matrix& b, Matrix& c, std::size_t k0, std::size_t k1,
              bool upper) {
  const std::size_t m = a.rows();
  const std::size_t n = b.rows();
  const std::size_t lda = a.cols();
  const std::size_t ldb = b.cols();
  const std::size_t ldc = c.cols();
  const std::size_t len = k1 - k0;
  const std::size_t m4 = m - m % 4;
  const std::size_t n4 = n - n % 4;
  const std::size_t nblocks = (m + kMb - 1) / kMb;

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t blk = 0; blk < nblocks; ++blk) {
    const std::size_t i_begin = blk * kMb;
    const std::size_t i_end = std::min(m, i_begin + kMb);
    for (std::size_t i = i_begin; i < i_end; i += 4) {
      const bool full_i = i < m4;
      const std::size_t j_start = upper ? (i - i % 4) : 0;
      std::size_t j = j_start;
      if (full_i) {
        for (; j < n4; j += 4)
          micro4x4(&a(i, k0), lda, &b(j, k0), ldb, len, &c(i, j), ldc);
      }
      // Ragged edges: one dot product per entry.
      const std::size_t i_stop = std::min(i + 4, i_end);
      for (std::size_t ii = i; ii < i_stop; ++ii) {
        const std::size_t jj0 = full_i ? n4 : j_start;
        for (std::size_t jj = jj0; jj < n; ++jj) c(ii, jj) += dot(&a(ii, k0), &b(jj, k0), len);
      }
    }
  }
}

Matrix nt_product(const Matrix& a, const Matrix& b, bool symmetric) {
  Matrix c(a.rows(), b.rows());
  const std::size_t k = a.cols();
  for (std::size_t k0 = 0; k0 < k; k0 += kKc) nt_chunk(a, b, c, k0, std::min(k, k0 + kKc), symmetric);
  if (symmetric) {
    for (std::size_t i = 0; i < c.rows(); ++i)
      for (std::size_t j = 0; j < i; ++j) c(i, j) = c(j, i);
  }
  return c;
}

}  // namespace

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt", a, b);
  return nt_product(a, b, false);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul", a, b);
  return nt_product(a, b.transpose(), false);
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn", a, b);
  return nt_product(a.transpose(), b.transpose(), false);
}

Matrix gram_rows(const Matrix& x) { return nt_product(x, x, true); }

Matrix gram_cols(const Matrix& x) {
  const Matrix xt = x.transpose();
  return nt_product(xt, xt, true);
}

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace parallel

}  // namespace fedqhd::kernels
