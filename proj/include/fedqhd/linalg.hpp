#pragma once

// Dense real linear algebra: a row-major Matrix plus the factorizations the
// federation and analysis code needs (Cholesky solves, symmetric eigen
// decompositions, singular values).

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fedqhd {

class Matrix {
 public:
  Matrix() = default;
  /// Zero-filled rows x cols matrix.
  Matrix(std::size_t rows, std::size_t cols);
  /// Takes ownership of row-major data. Throws DimensionMismatch on a size
  /// mismatch and std::invalid_argument on non-finite entries.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const double& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::vector<double> col(std::size_t c) const;
  void set_col(std::size_t c, std::span<const double> values);

  Matrix transpose() const;
  bool all_finite() const noexcept;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s) noexcept;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

double frobenius_norm(const Matrix& a) noexcept;
double max_abs(const Matrix& a) noexcept;
/// Largest |a_ij| / max(|a|) asymmetry, i.e. symmetric within `rel_tol`.
bool is_symmetric(const Matrix& a, double rel_tol = 1e-10) noexcept;
double dot(std::span<const double> x, std::span<const double> y) noexcept;
double norm2(std::span<const double> x) noexcept;

/// Solves A X = B for symmetric positive-definite A.
/// Throws NotSpdError when a pivot is <= 0 and DimensionMismatch on bad shapes.
Matrix cholesky_solve(const Matrix& a, const Matrix& b);

/// Lower-triangular Cholesky factor L with A = L L^T.
Matrix cholesky_factor(const Matrix& a);
/// Solves (L L^T) X = B given the factor from cholesky_factor.
Matrix cholesky_substitute(const Matrix& l, const Matrix& b);

struct SymEig {
  std::vector<double> eigenvalues;  // descending
  Matrix eigenvectors;              // column k pairs with eigenvalues[k]
};

/// Cyclic Jacobi eigen decomposition of a symmetric matrix.
SymEig sym_eig(const Matrix& a);

/// Eigenvalues only (descending), via Householder tridiagonalization and
/// implicit QL. Much cheaper than sym_eig for large Grams.
std::vector<double> sym_eigenvalues(const Matrix& a);

/// Singular values in descending order (one-sided Jacobi), clamped to >= 0.
std::vector<double> svd_singular_values(const Matrix& a);

/// Little-endian dump: u64 rows, u64 cols, rows*cols float64 values.
void write_matrix(std::ostream& out, const Matrix& m);
Matrix read_matrix(std::istream& in);
void save_matrix(const std::string& path, const Matrix& m);
Matrix load_matrix(const std::string& path);

}  // namespace fedqhd
