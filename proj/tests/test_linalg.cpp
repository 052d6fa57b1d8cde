#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "fedqhd/error.hpp"
#include "fedqhd/linalg.hpp"
#include "fedqhd/rng.hpp"
#include "test_util.hpp"

using namespace fedqhd;
using fedqhd::test::random_matrix;

namespace {

Matrix naive_mul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

// Gauss-Jordan inverse with partial pivoting.
Matrix gauss_jordan_inverse(Matrix a) {
  const std::size_t n = a.rows();
  Matrix inv = Matrix::identity(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(p, c))) p = r;
    for (std::size_t k = 0; k < n; ++k) {
      std::swap(a(c, k), a(p, k));
      std::swap(inv(c, k), inv(p, k));
    }
    const double d = a(c, c);
    for (std::size_t k = 0; k < n; ++k) {
      a(c, k) /= d;
      inv(c, k) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a(r, c);
      for (std::size_t k = 0; k < n; ++k) {
        a(r, k) -= f * a(c, k);
        inv(r, k) -= f * inv(c, k);
      }
    }
  }
  return inv;
}

// Number of eigenvalues of symmetric A below x, from the signs of the pivots
// of A - xI (Sylvester's law of inertia).
std::size_t count_below(const Matrix& a, double x) {
  const std::size_t n = a.rows();
  Matrix m = a;
  for (std::size_t i = 0; i < n; ++i) m(i, i) -= x;
  std::size_t neg = 0;
  for (std::size_t c = 0; c < n; ++c) {
    double piv = m(c, c);
    if (piv == 0.0) piv = 1e-300;
    if (piv < 0.0) ++neg;
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = m(r, c) / piv;
      for (std::size_t k = c; k < n; ++k) m(r, k) -= f * m(c, k);
    }
  }
  return neg;
}

// Eigenvalues (descending) by bisection on the inertia count.
std::vector<double> bisection_eigenvalues(const Matrix& a) {
  const std::size_t n = a.rows();
  double bound = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::abs(a(i, j));
    bound = std::max(bound, s);
  }
  std::vector<double> out;
  for (std::size_t k = 0; k < n; ++k) {  // k-th smallest
    double lo = -bound - 1.0, hi = bound + 1.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (count_below(a, mid) > k)
        hi = mid;
      else
        lo = mid;
    }
    out.push_back(0.5 * (lo + hi));
  }
  std::reverse(out.begin(), out.end());
  return out;
}

Matrix random_symmetric(std::size_t n, Rng& rng) {
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) a(i, j) = a(j, i) = rng.normal();
  return a;
}

}  // namespace

TEST(Matrix, ConstructionChecksShapeAndFiniteness) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), DimensionMismatch);
  EXPECT_THROW(Matrix(1, 2, std::vector<double>{1, NAN}), std::invalid_argument);
  EXPECT_THROW(Matrix(1, 1, std::vector<double>{INFINITY}), std::invalid_argument);
  const Matrix m{{1, 2, 3}, {4, 5, 6}};
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m(1, 2), 6.0);
  EXPECT_EQ(m.transpose()(2, 1), 6.0);
}

TEST(Cholesky, IdentityReturnsRightHandSide) {
  Rng rng(1);
  const Matrix b = random_matrix(3, 2, rng);
  const Matrix x = cholesky_solve(Matrix::identity(3), b);
  EXPECT_LE(max_abs(x - b), 1e-15);
}

TEST(Cholesky, DiagonalSolve) {
  const Matrix x = cholesky_solve(Matrix{{2, 0}, {0, 4}}, Matrix{{2}, {8}});
  EXPECT_NEAR(x(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(x(1, 0), 2.0, 1e-15);
}

TEST(Cholesky, MatchesGaussJordanInverse) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix m = random_matrix(5, 5, rng);
    Matrix a = naive_mul(m.transpose(), m) + Matrix::identity(5);
    const Matrix b = random_matrix(5, 3, rng);
    const Matrix x = cholesky_solve(a, b);
    const Matrix oracle = naive_mul(gauss_jordan_inverse(a), b);
    EXPECT_LE(frobenius_norm(x - oracle), 1e-10 * frobenius_norm(oracle));
    EXPECT_LE(frobenius_norm(naive_mul(a, x) - b), 1e-8 * frobenius_norm(b));
  }
}

TEST(Cholesky, RecoversKnownSolution) {
  Rng rng(3);
  for (std::size_t n : {1u, 4u, 17u, 40u}) {
    const Matrix m = random_matrix(n, n, rng);
    const Matrix a = naive_mul(m.transpose(), m) + Matrix::identity(n);
    const Matrix x0 = random_matrix(n, 2, rng);
    const Matrix x = cholesky_solve(a, naive_mul(a, x0));
    EXPECT_LE(frobenius_norm(x - x0), 1e-8 * frobenius_norm(x0)) << n;
  }
}

TEST(Cholesky, Errors) {
  EXPECT_THROW(cholesky_solve(Matrix{{1, 0}, {0, -1}}, Matrix{{1}, {1}}), NotSpdError);
  EXPECT_THROW(cholesky_solve(Matrix{{0, 0}, {0, 0}}, Matrix{{1}, {1}}), NotSpdError);
  EXPECT_THROW(cholesky_solve(Matrix::identity(2), Matrix{{1}, {1}, {1}}), DimensionMismatch);
  EXPECT_THROW(cholesky_solve(Matrix(2, 3), Matrix(2, 1)), DimensionMismatch);
  EXPECT_THROW(cholesky_solve(Matrix{{1, 0.5}, {0, 1}}, Matrix{{1}, {1}}), NotSpdError);
}

TEST(SymEig, DiagonalSortedDescending) {
  const SymEig e = sym_eig(Matrix{{3, 0, 0}, {0, 1, 0}, {0, 0, 2}});
  ASSERT_EQ(e.eigenvalues.size(), 3u);
  EXPECT_NEAR(e.eigenvalues[0], 3.0, 1e-14);
  EXPECT_NEAR(e.eigenvalues[1], 2.0, 1e-14);
  EXPECT_NEAR(e.eigenvalues[2], 1.0, 1e-14);
}

TEST(SymEig, RankOne) {
  Rng rng(4);
  std::vector<double> v(6);
  for (double& x : v) x = rng.normal();
  const double n = norm2(v);
  for (double& x : v) x /= n;
  const Matrix col = Matrix::column(v);
  const SymEig e = sym_eig(naive_mul(col, col.transpose()));
  EXPECT_NEAR(e.eigenvalues[0], 1.0, 1e-12);
  for (std::size_t k = 1; k < 6; ++k) EXPECT_NEAR(e.eigenvalues[k], 0.0, 1e-12);
}

TEST(SymEig, MatchesBisectionOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = random_symmetric(6, rng);
    const auto oracle = bisection_eigenvalues(a);
    const SymEig e = sym_eig(a);
    const auto fast = sym_eigenvalues(a);
    for (std::size_t k = 0; k < 6; ++k) {
      EXPECT_NEAR(e.eigenvalues[k], oracle[k], 1e-8);
      EXPECT_NEAR(fast[k], oracle[k], 1e-8);
    }
  }
}

TEST(SymEig, ReconstructionAndOrthonormality) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(32);
    const Matrix a = random_symmetric(n, rng);
    const SymEig e = sym_eig(a);
    ASSERT_TRUE(std::is_sorted(e.eigenvalues.rbegin(), e.eigenvalues.rend()));
    const Matrix& v = e.eigenvectors;
    Matrix vl = v;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) vl(i, k) *= e.eigenvalues[k];
    EXPECT_LE(frobenius_norm(naive_mul(vl, v.transpose()) - a), 1e-8 * frobenius_norm(a));
    EXPECT_LE(max_abs(naive_mul(v.transpose(), v) - Matrix::identity(n)), 1e-10);
  }
}

TEST(SymEig, FastEigenvaluesAgreeWithJacobi) {
  Rng rng(7);
  for (std::size_t n : {1u, 2u, 9u, 33u, 80u}) {
    const Matrix a = random_symmetric(n, rng);
    const auto jac = sym_eig(a).eigenvalues;
    const auto ql = sym_eigenvalues(a);
    ASSERT_EQ(ql.size(), n);
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(ql[k], jac[k], 1e-9 * (1.0 + std::abs(jac[k])));
  }
}

TEST(Svd, SmallCases) {
  auto s = svd_singular_values(Matrix::identity(3));
  for (double v : s) EXPECT_NEAR(v, 1.0, 1e-14);
  s = svd_singular_values(Matrix(3, 2));
  ASSERT_EQ(s.size(), 2u);
  for (double v : s) EXPECT_EQ(v, 0.0);
  s = svd_singular_values(Matrix{{0, 1}, {1, 0}});
  EXPECT_NEAR(s[0], 1.0, 1e-14);
  EXPECT_NEAR(s[1], 1.0, 1e-14);
}

TEST(Svd, SquareRootOfGramEigenvalues) {
  Rng rng(8);
  for (auto [r, c] : {std::pair<std::size_t, std::size_t>{5, 3}, {3, 5}, {8, 8}, {20, 7}}) {
    const Matrix a = random_matrix(r, c, rng);
    const auto s = svd_singular_values(a);
    const Matrix g = c <= r ? naive_mul(a.transpose(), a) : naive_mul(a, a.transpose());
    const auto ev = bisection_eigenvalues(g);
    ASSERT_EQ(s.size(), std::min(r, c));
    for (std::size_t k = 0; k < s.size(); ++k) {
      EXPECT_GE(s[k], 0.0);
      EXPECT_NEAR(s[k], std::sqrt(std::max(ev[k], 0.0)), 1e-8);
    }
  }
}

TEST(MatrixIo, RoundTripIsBitExact) {
  Rng rng(9);
  const Matrix m = random_matrix(7, 3, rng);
  std::stringstream ss;
  write_matrix(ss, m);
  EXPECT_EQ(ss.str().size(), 16u + 21u * 8u);
  const Matrix back = read_matrix(ss);
  EXPECT_EQ(back, m);
}

TEST(MatrixIo, LittleEndianHeader) {
  std::stringstream ss;
  write_matrix(ss, Matrix{{1.0, 2.0}});
  const std::string s = ss.str();
  EXPECT_EQ(static_cast<unsigned char>(s[0]), 1);  // rows, low byte first
  EXPECT_EQ(static_cast<unsigned char>(s[8]), 2);  // cols
  double first = 0.0;
  std::memcpy(&first, s.data() + 16, 8);
  EXPECT_EQ(first, 1.0);
}
