#include "stacklab/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "stacklab/errors.hpp"
#include "stacklab/rng.hpp"

namespace stacklab {

namespace {

void require_same_dim(const Matrix& a, const Matrix& b, const char* op) {
  if (a.dim() != b.dim()) {
    throw UsageError(std::string(op) + ": dimension mismatch (" + std::to_string(a.dim()) +
                     " vs " + std::to_string(b.dim()) + ")");
  }
}

const Matrix& checked(const Matrix& m, const char* op) {
  if (!m.all_finite()) throw NumericError(std::string(op) + ": non-finite result");
  return m;
}

// Columns i and j of a row-major matrix.
void rotate_columns(Matrix& m, std::size_t i, std::size_t j, double c, double s) {
  const std::size_t d = m.dim();
  for (std::size_t r = 0; r < d; ++r) {
    const double a = m(r, i);
    const double b = m(r, j);
    m(r, i) = c * a - s * b;
    m(r, j) = s * a + c * b;
  }
}

}  // namespace

Matrix::Matrix(std::size_t dim) : dim_(dim), data_(dim * dim, 0.0) {}

Matrix::Matrix(std::size_t dim, std::vector<double> row_major)
    : dim_(dim), data_(std::move(row_major)) {
  if (data_.size() != dim_ * dim_) {
    throw UsageError("Matrix: expected " + std::to_string(dim_ * dim_) + " entries, got " +
                     std::to_string(data_.size()));
  }
}

Matrix Matrix::identity(std::size_t dim) {
  Matrix m(dim);
  for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t d = rows.size();
  std::vector<double> data;
  data.reserve(d * d);
  for (const auto& row : rows) {
    if (row.size() != d) throw UsageError("Matrix::from_rows: rows must form a square matrix");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(d, std::move(data));
}

Matrix Matrix::transpose() const {
  Matrix t(dim_);
  for (std::size_t r = 0; r < dim_; ++r)
    for (std::size_t c = 0; c < dim_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_dim(*this, other, "operator+");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_dim(*this, other, "operator-");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& x : data_) x *= s;
  return *this;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require_same_dim(a, b, "matmul");
  const std::size_t d = a.dim();
  Matrix c(d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) c(i, j) += aik * b(k, j);
    }
  }
  return checked(c, "matmul");
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require_same_dim(a, b, "matmul_tn");
  const std::size_t d = a.dim();
  Matrix c(d);
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < d; ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) c(i, j) += aki * b(k, j);
    }
  }
  return checked(c, "matmul_tn");
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require_same_dim(a, b, "matmul_nt");
  const std::size_t d = a.dim();
  Matrix c(d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += a(i, k) * b(j, k);
      c(i, j) = s;
    }
  }
  return checked(c, "matmul_nt");
}

double frobenius_inner(const Matrix& a, const Matrix& b) {
  require_same_dim(a, b, "frobenius_inner");
  const auto x = a.values();
  const auto y = b.values();
  return std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
}

double frobenius_norm(const Matrix& a) {
  // Scaled accumulation so that tiny and huge entries neither underflow nor
  // overflow when squared.
  const double scale = max_abs(a);
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double s = 0.0;
  for (double x : a.values()) {
    const double y = x / scale;
    s += y * y;
  }
  return scale * std::sqrt(s);
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double x : a.values()) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_dim(a, b, "max_abs_diff");
  double m = 0.0;
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

double trace(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a(i, i);
  return s;
}

Svd svd(const Matrix& a) {
  if (!a.all_finite()) throw NumericError("svd: non-finite input");
  const std::size_t d = a.dim();
  Matrix u = a;
  Matrix v = Matrix::identity(d);
  const std::size_t max_sweeps = 100 * d * d;
  constexpr double eps = 1e-15;

  bool converged = d <= 1;
  for (std::size_t sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t r = 0; r < d; ++r) {
          alpha += u(r, p) * u(r, p);
          beta += u(r, q) * u(r, q);
          gamma += u(r, p) * u(r, q);
        }
        if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double s = c * t;
        rotate_columns(u, p, q, c, s);
        rotate_columns(v, p, q, c, s);
      }
    }
    converged = !rotated;
  }
  if (!converged) throw NumericError("svd: Jacobi sweeps did not converge");

  std::vector<double> norms(d);
  for (std::size_t c = 0; c < d; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < d; ++r) s += u(r, c) * u(r, c);
    norms[c] = std::sqrt(s);
  }
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return norms[i] > norms[j]; });

  Svd out{Matrix(d), std::vector<double>(d), Matrix(d)};
  for (std::size_t k = 0; k < d; ++k) {
    const std::size_t c = order[k];
    out.values[k] = norms[c];
    for (std::size_t r = 0; r < d; ++r) {
      out.u(r, k) = norms[c] > 0.0 ? u(r, c) / norms[c] : 0.0;
      out.v(r, k) = v(r, c);
    }
  }
  return out;
}

std::vector<double> singular_values(const Matrix& a) { return svd(a).values; }

double sigma_min(const Matrix& a) {
  const auto s = singular_values(a);
  return s.empty() ? 0.0 : s.back();
}

double sigma_max(const Matrix& a) {
  const auto s = singular_values(a);
  return s.empty() ? 0.0 : s.front();
}

Matrix inverse(const Matrix& a) {
  const std::size_t d = a.dim();
  if (d == 0) throw UsageError("inverse: empty matrix");
  const auto sv = singular_values(a);
  if (sv.back() < kSingularTolerance * sv.front() || sv.front() == 0.0) {
    throw SingularMatrix(sv.back(), sv.front());
  }

  Matrix work = a;
  Matrix inv = Matrix::identity(d);
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < d; ++r)
      if (std::abs(work(r, col)) > std::abs(work(pivot, col))) pivot = r;
    if (pivot != col) {
      for (std::size_t c = 0; c < d; ++c) {
        std::swap(work(pivot, c), work(col, c));
        std::swap(inv(pivot, c), inv(col, c));
      }
    }
    const double p = work(col, col);
    for (std::size_t c = 0; c < d; ++c) {
      work(col, c) /= p;
      inv(col, c) /= p;
    }
    for (std::size_t r = 0; r < d; ++r) {
      if (r == col) continue;
      const double f = work(r, col);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) {
        work(r, c) -= f * work(col, c);
        inv(r, c) -= f * inv(col, c);
      }
    }
  }
  return checked(inv, "inverse");
}

SymmetricEigen symmetric_eigen(const Matrix& input) {
  if (!input.all_finite()) throw NumericError("symmetric_eigen: non-finite input");
  const std::size_t d = input.dim();
  Matrix a = (input + input.transpose()) * 0.5;
  Matrix v = Matrix::identity(d);
  const std::size_t max_sweeps = 100 * d * d;

  auto off_diagonal = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };
  const double scale = std::max(frobenius_norm(a), 1e-300);

  bool converged = off_diagonal() <= 1e-15 * scale;
  for (std::size_t sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(1.0, theta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double s = t * c;
        // A <- J^T A J with J the rotation in the (p, q) plane.
        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        rotate_columns(v, p, q, c, s);
      }
    }
    converged = off_diagonal() <= 1e-15 * scale;
  }
  if (!converged) throw NumericError("symmetric_eigen: Jacobi sweeps did not converge");

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  SymmetricEigen out{std::vector<double>(d), Matrix(d)};
  for (std::size_t k = 0; k < d; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < d; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

Matrix symmetric_sqrt(const Matrix& a) {
  const auto eig = symmetric_eigen(a);
  const std::size_t d = a.dim();
  Matrix scaled = eig.vectors;
  for (std::size_t k = 0; k < d; ++k) {
    if (eig.values[k] < -1e-12 * std::max(1.0, std::abs(eig.values.front()))) {
      throw NumericError("symmetric_sqrt: matrix is not positive semi-definite");
    }
    const double root = std::sqrt(std::max(eig.values[k], 0.0));
    for (std::size_t r = 0; r < d; ++r) scaled(r, k) *= root;
  }
  return matmul_nt(scaled, eig.vectors);
}

Matrix gaussian_matrix(std::size_t dim, Rng& rng) {
  Matrix g(dim);
  for (double& x : g.values()) x = rng.normal();
  return g;
}

Matrix random_orthogonal(std::size_t dim, Rng& rng) {
  if (dim == 0) throw UsageError("random_orthogonal: dim must be positive");
  const Matrix g = gaussian_matrix(dim, rng);
  // Modified Gram-Schmidt on the columns, applied twice for full orthogonality.
  // The R factor from MGS has a positive diagonal, which fixes the signs.
  Matrix q = g;
  for (std::size_t j = 0; j < dim; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < j; ++i) {
        double proj = 0.0;
        for (std::size_t r = 0; r < dim; ++r) proj += q(r, i) * q(r, j);
        for (std::size_t r = 0; r < dim; ++r) q(r, j) -= proj * q(r, i);
      }
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < dim; ++r) norm += q(r, j) * q(r, j);
    norm = std::sqrt(norm);
    if (norm == 0.0) throw NumericError("random_orthogonal: degenerate Gaussian draw");
    for (std::size_t r = 0; r < dim; ++r) q(r, j) /= norm;
  }
  return q;
}

}  // namespace stacklab
