#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "stacklab/matrix.hpp"
#include "stacklab/rng.hpp"

namespace testing {

using stacklab::Matrix;

// I + scale * G / sqrt(d): well conditioned for small scale.
inline Matrix near_identity(std::size_t d, stacklab::Rng& rng, double scale = 0.3) {
  return Matrix::identity(d) +
         stacklab::gaussian_matrix(d, rng) * (scale / std::sqrt(static_cast<double>(d)));
}

// |det A| by elimination with partial pivoting, kept separate from the
// library's inverse.
inline double abs_det(Matrix a) {
  const std::size_t d = a.dim();
  double det = 1.0;
  for (std::size_t c = 0; c < d; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < d; ++r)
      if (std::abs(a(r, c)) > std::abs(a(p, c))) p = r;
    if (a(p, c) == 0.0) return 0.0;
    for (std::size_t k = 0; k < d; ++k) std::swap(a(c, k), a(p, k));
    det *= a(c, c);
    for (std::size_t r = c + 1; r < d; ++r) {
      const double f = a(r, c) / a(c, c);
      for (std::size_t k = c; k < d; ++k) a(r, k) -= f * a(c, k);
    }
  }
  return std::abs(det);
}

inline double rel_diff(const Matrix& a, const Matrix& b) {
  return stacklab::frobenius_norm(a - b) / std::max(1e-300, stacklab::frobenius_norm(b));
}

}  // namespace testing
