#include "fedqhd/linalg.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "fedqhd/error.hpp"
#include "fedqhd/kernels.hpp"

namespace fedqhd {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionMismatch("Matrix: " + std::to_string(data_.size()) +
                            " values for a " + std::to_string(rows_) + "x" +
                            std::to_string(cols_) + " matrix");
  }
  if (!all_finite()) throw std::invalid_argument("Matrix: non-finite entry");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionMismatch("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  if (!all_finite()) throw std::invalid_argument("Matrix: non-finite entry");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

std::vector<double> Matrix::col(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

void Matrix::set_col(std::size_t c, std::span<const double> values) {
  if (values.size() != rows_) throw DimensionMismatch("Matrix::set_col: length mismatch");
  for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_)
    throw DimensionMismatch("Matrix +=: " + shape(*this) + " vs " + shape(other));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_)
    throw DimensionMismatch("Matrix -=: " + shape(*this) + " vs " + shape(other));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

double frobenius_norm(const Matrix& a) noexcept { return norm2(a.data()); }

double max_abs(const Matrix& a) noexcept {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

bool is_symmetric(const Matrix& a, double rel_tol) noexcept {
  if (!a.square()) return false;
  const double scale = std::max(max_abs(a), std::numeric_limits<double>::min());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j)
      if (std::abs(a(i, j) - a(j, i)) > rel_tol * scale) return false;
  return true;
}

double dot(std::span<const double> x, std::span<const double> y) noexcept {
  return kernels::dot(x.data(), y.data(), std::min(x.size(), y.size()));
}

double norm2(std::span<const double> x) noexcept {
  // Scaled accumulation so tiny or huge entries neither underflow nor overflow.
  double scale = 0.0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return 0.0;
  double s = 0.0;
  for (double v : x) {
    const double t = v / scale;
    s += t * t;
  }
  return scale * std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Cholesky

Matrix cholesky_factor(const Matrix& a) {
  if (!a.square()) throw DimensionMismatch("cholesky: matrix is " + shape(a));
  if (!is_symmetric(a)) throw NotSpdError("cholesky: matrix is not symmetric");
  const std::size_t n = a.rows();
  Matrix l(n, n);
  // Row-oriented (Cholesky-Crout): every inner product runs over contiguous
  // row prefixes of L.
  for (std::size_t i = 0; i < n; ++i) {
    const double* li = &l(i, 0);
    for (std::size_t j = 0; j < i; ++j) {
      const double s = a(i, j) - kernels::dot(li, &l(j, 0), j);
      l(i, j) = s / l(j, j);
    }
    const double pivot = a(i, i) - kernels::dot(li, li, i);
    if (!(pivot > 0.0)) {
      throw NotSpdError("cholesky: pivot " + std::to_string(i) + " is " +
                        std::to_string(pivot));
    }
    l(i, i) = std::sqrt(pivot);
  }
  return l;
}

Matrix cholesky_substitute(const Matrix& l, const Matrix& b) {
  const std::size_t n = l.rows();
  if (b.rows() != n)
    throw DimensionMismatch("cholesky_solve: A is " + shape(l) + ", B is " + shape(b));
  const std::size_t k = b.cols();
  Matrix y = b;
  // L Y = B
  for (std::size_t i = 0; i < n; ++i) {
    double* yi = &y(i, 0);
    for (std::size_t j = 0; j < i; ++j) {
      const double lij = l(i, j);
      if (lij == 0.0) continue;
      const double* yj = &y(j, 0);
      for (std::size_t c = 0; c < k; ++c) yi[c] -= lij * yj[c];
    }
    const double inv = 1.0 / l(i, i);
    for (std::size_t c = 0; c < k; ++c) yi[c] *= inv;
  }
  // L^T X = Y
  for (std::size_t ii = n; ii-- > 0;) {
    double* xi = &y(ii, 0);
    for (std::size_t j = ii + 1; j < n; ++j) {
      const double lji = l(j, ii);
      if (lji == 0.0) continue;
      const double* xj = &y(j, 0);
      for (std::size_t c = 0; c < k; ++c) xi[c] -= lji * xj[c];
    }
    const double inv = 1.0 / l(ii, ii);
    for (std::size_t c = 0; c < k; ++c) xi[c] *= inv;
  }
  return y;
}

Matrix cholesky_solve(const Matrix& a, const Matrix& b) {
  if (!a.square() || a.rows() != b.rows())
    throw DimensionMismatch("cholesky_solve: A is " + shape(a) + ", B is " + shape(b));
  return cholesky_substitute(cholesky_factor(a), b);
}

// ---------------------------------------------------------------------------
// Symmetric eigenproblems

SymEig sym_eig(const Matrix& input) {
  if (!input.square()) throw DimensionMismatch("sym_eig: matrix is " + shape(input));
  if (!is_symmetric(input)) throw std::invalid_argument("sym_eig: matrix is not symmetric");
  const std::size_t n = input.rows();
  Matrix a = input;
  Matrix v = Matrix::identity(n);
  constexpr int kMaxSweeps = 100;

  const double total = frobenius_norm(a);
  int sweep = 0;
  for (;; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    off = std::sqrt(2.0 * off);
    if (off <= 1e-15 * total || total == 0.0) break;
    if (sweep == kMaxSweeps)
      throw NonConvergence("sym_eig: no convergence after " + std::to_string(kMaxSweeps) +
                           " Jacobi sweeps");
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        // Skip rotations that cannot change the diagonal at working precision.
        if (sweep > 3 && std::abs(apq) < 1e-18 * (std::abs(app) + std::abs(aqq))) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // A <- J^T A J with J the (p,q) rotation.
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        double* rp = &a(p, 0);
        double* rq = &a(q, 0);
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = rp[k];
          const double aqk = rq[k];
          rp[k] = c * apk - s * aqk;
          rq[k] = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  SymEig out;
  out.eigenvalues.resize(n);
  out.eigenvectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.eigenvalues[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, k) = v(r, order[k]);
  }
  return out;
}

std::vector<double> sym_eigenvalues(const Matrix& input) {
  if (!input.square()) throw DimensionMismatch("sym_eigenvalues: matrix is " + shape(input));
  if (!is_symmetric(input))
    throw std::invalid_argument("sym_eigenvalues: matrix is not symmetric");
  const std::size_t n = input.rows();
  if (n == 0) return {};
  Matrix a = input;
  std::vector<double> d(n), e(n, 0.0);

  // Householder reduction to tridiagonal form; only the trailing block is kept
  // up to date, the reflectors themselves are discarded.
  std::vector<double> v(n), w(n);
  for (std::size_t k = 0; k + 2 < n; ++k) {
    const std::size_t len = n - k - 1;
    double xnorm = 0.0;
    for (std::size_t i = 0; i < len; ++i) v[i] = a(k + 1 + i, k);
    xnorm = norm2(std::span<const double>(v.data(), len));
    d[k] = a(k, k);
    if (xnorm == 0.0) {
      e[k] = 0.0;
      continue;
    }
    const double alpha = v[0] > 0.0 ? -xnorm : xnorm;
    e[k] = alpha;
    v[0] -= alpha;
    const double vnorm = norm2(std::span<const double>(v.data(), len));
    if (vnorm == 0.0) continue;
    for (std::size_t i = 0; i < len; ++i) v[i] /= vnorm;
    // p = A_sub v ; w = p - (v.p) v ; A_sub -= 2 (v w^T + w v^T)
    for (std::size_t i = 0; i < len; ++i)
      w[i] = kernels::dot(&a(k + 1 + i, k + 1), v.data(), len);
    const double kk = kernels::dot(v.data(), w.data(), len);
    for (std::size_t i = 0; i < len; ++i) w[i] -= kk * v[i];
    for (std::size_t i = 0; i < len; ++i) {
      double* row = &a(k + 1 + i, k + 1);
      const double vi2 = 2.0 * v[i];
      const double wi2 = 2.0 * w[i];
      for (std::size_t j = 0; j < len; ++j) row[j] -= vi2 * w[j] + wi2 * v[j];
    }
  }
  if (n >= 2) {
    d[n - 2] = a(n - 2, n - 2);
    e[n - 2] = a(n - 1, n - 2);
  }
  d[n - 1] = a(n - 1, n - 1);
  e[n - 1] = 0.0;

  // Implicit QL with Wilkinson-style shifts on the tridiagonal (d, e).
  constexpr int kMaxIter = 60;
  const double eps = std::numeric_limits<double>::epsilon();
  const int nn = static_cast<int>(n);
  for (int l = 0; l < nn; ++l) {
    int iter = 0;
    int m = l;
    do {
      for (m = l; m < nn - 1; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= eps * dd) break;
      }
      if (m != l) {
        if (iter++ == kMaxIter)
          throw NonConvergence("sym_eigenvalues: QL iteration did not converge");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        int i = m - 1;
        bool underflow = false;
        for (; i >= l; --i) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            underflow = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
        }
        if (underflow) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
  std::sort(d.begin(), d.end(), std::greater<>());
  return d;
}

std::vector<double> svd_singular_values(const Matrix& input) {
  if (!input.all_finite()) throw std::invalid_argument("svd: non-finite entry");
  // One-sided Jacobi on the columns of the taller orientation. Columns are
  // stored contiguously.
  const bool flip = input.cols() > input.rows();
  const Matrix& src = input;
  const std::size_t len = flip ? src.cols() : src.rows();
  const std::size_t ncol = flip ? src.rows() : src.cols();
  std::vector<double> u(len * ncol);
  for (std::size_t c = 0; c < ncol; ++c)
    for (std::size_t r = 0; r < len; ++r)
      u[c * len + r] = flip ? src(c, r) : src(r, c);

  constexpr int kMaxSweeps = 80;
  const double tol = 1e-15;
  bool rotated = true;
  int sweep = 0;
  while (rotated) {
    if (sweep++ == kMaxSweeps)
      throw NonConvergence("svd_singular_values: no convergence after " +
                           std::to_string(kMaxSweeps) + " sweeps");
    rotated = false;
    for (std::size_t p = 0; p + 1 < ncol; ++p) {
      double* up = &u[p * len];
      for (std::size_t q = p + 1; q < ncol; ++q) {
        double* uq = &u[q * len];
        const double alpha = kernels::dot(up, up, len);
        const double beta = kernels::dot(uq, uq, len);
        const double gamma = kernels::dot(up, uq, len);
        if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t =
            std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t r = 0; r < len; ++r) {
          const double a = up[r];
          const double b = uq[r];
          up[r] = c * a - s * b;
          uq[r] = s * a + c * b;
        }
      }
    }
  }
  std::vector<double> sv(ncol);
  for (std::size_t c = 0; c < ncol; ++c)
    sv[c] = norm2(std::span<const double>(&u[c * len], len));
  std::sort(sv.begin(), sv.end(), std::greater<>());
  for (double& x : sv) x = std::max(x, 0.0);
  return sv;
}

// ---------------------------------------------------------------------------
// Binary dump

namespace {

std::uint64_t to_little(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::little) {
    return x;
  } else {
    std::uint64_t y = 0;
    for (int i = 0; i < 8; ++i) y = (y << 8) | ((x >> (8 * i)) & 0xff);
    return y;
  }
}

void put_u64(std::ostream& out, std::uint64_t x) {
  const std::uint64_t le = to_little(x);
  out.write(reinterpret_cast<const char*>(&le), sizeof le);
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t le = 0;
  in.read(reinterpret_cast<char*>(&le), sizeof le);
  if (!in) throw IoError("read_matrix: truncated stream");
  return to_little(le);
}

}  // namespace

void write_matrix(std::ostream& out, const Matrix& m) {
  put_u64(out, m.rows());
  put_u64(out, m.cols());
  for (double v : m.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw IoError("write_matrix: stream failure");
}

Matrix read_matrix(std::istream& in) {
  const std::uint64_t rows = get_u64(in);
  const std::uint64_t cols = get_u64(in);
  if (cols != 0 && rows > (std::uint64_t{1} << 40) / cols)
    throw IoError("read_matrix: implausible shape");
  std::vector<double> data(rows * cols);
  for (double& v : data) v = std::bit_cast<double>(get_u64(in));
  return Matrix(rows, cols, std::move(data));
}

void save_matrix(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_matrix(out, m);
}

Matrix load_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_matrix(in);
}

}  // namespace fedqhd
