#pragma once

// Dense square matrices in double precision.
//
// Everything in the library lives on d x d real matrices with d <= 128, so
// this kernel only implements what the update rules, the problem generator
// and the certifier need: products, norms, inverses guarded by a singular
// value check, a Jacobi SVD and a Jacobi symmetric eigensolver.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace stacklab {

class Rng;

class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t dim);  // zeros
  Matrix(std::size_t dim, std::vector<double> row_major);

  static Matrix zeros(std::size_t dim) { return Matrix(dim); }
  static Matrix identity(std::size_t dim);
  static Matrix diagonal(std::span<const double> diag);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t dim() const { return dim_; }
  bool empty() const { return dim_ == 0; }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * dim_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * dim_ + c]; }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }

  Matrix transpose() const;
  bool all_finite() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }
  friend Matrix operator-(Matrix a) { return a *= -1.0; }

  // Entrywise bitwise equality.
  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& a);
double frobenius_inner(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double trace(const Matrix& a);

// Relative singularity threshold: inverse() rejects sigma_min < this * sigma_max.
inline constexpr double kSingularTolerance = 1e-12;

// Inverse via Gauss-Jordan elimination with partial pivoting, after checking
// sigma_min >= kSingularTolerance * sigma_max. Throws SingularMatrix otherwise.
Matrix inverse(const Matrix& a);

struct Svd {
  Matrix u;                     // columns are left singular vectors
  std::vector<double> values;   // descending
  Matrix v;                     // columns are right singular vectors
};

// One-sided (Hestenes) Jacobi SVD. Throws NumericError when the sweep cap of
// 100 * d^2 is exhausted.
Svd svd(const Matrix& a);
std::vector<double> singular_values(const Matrix& a);
double sigma_min(const Matrix& a);
double sigma_max(const Matrix& a);

struct SymmetricEigen {
  std::vector<double> values;  // descending
  Matrix vectors;              // columns are eigenvectors
};

// Cyclic Jacobi eigendecomposition. The input is symmetrized first.
SymmetricEigen symmetric_eigen(const Matrix& a);

// Symmetric square root of a symmetric positive semi-definite matrix.
Matrix symmetric_sqrt(const Matrix& a);

// d x d matrix with i.i.d. N(0, 1) entries.
Matrix gaussian_matrix(std::size_t dim, Rng& rng);

// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the signs
// fixed so that R has a positive diagonal.
Matrix random_orthogonal(std::size_t dim, Rng& rng);

}  // namespace stacklab
