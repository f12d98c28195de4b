#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "stacklab/errors.hpp"
#include "stacklab/matrix.hpp"
#include "stacklab/rng.hpp"
#include "support.hpp"

using namespace stacklab;
using testing::abs_det;
using testing::near_identity;

TEST_CASE("matmul small cases") {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{0, 1}, {1, 0}});
  CHECK(matmul(a, b) == Matrix::from_rows({{2, 1}, {4, 3}}));
  CHECK(matmul(Matrix::identity(2), a) == a);
  CHECK(matmul(a, Matrix(2)) == Matrix(2));
  CHECK_THROWS_AS(matmul(a, Matrix::identity(3)), UsageError);
}

TEST_CASE("transposed products agree with explicit transposes") {
  Rng rng(3);
  const Matrix a = gaussian_matrix(6, rng), b = gaussian_matrix(6, rng);
  CHECK(max_abs_diff(matmul_tn(a, b), matmul(a.transpose(), b)) <= 1e-14);
  CHECK(max_abs_diff(matmul_nt(a, b), matmul(a, b.transpose())) <= 1e-14);
}

TEST_CASE("matmul associativity") {
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const Matrix a = gaussian_matrix(7, rng), b = gaussian_matrix(7, rng), c = gaussian_matrix(7, rng);
    CHECK(testing::rel_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) <= 1e-9);
  }
}

TEST_CASE("norms and inner products") {
  CHECK(frobenius_norm(Matrix(3)) == 0.0);
  CHECK(frobenius_norm(Matrix::identity(4)) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(frobenius_norm(Matrix::from_rows({{3, 4}, {0, 0}})) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(frobenius_inner(Matrix::identity(3), Matrix::identity(3)) == 3.0);
  CHECK(frobenius_inner(Matrix::from_rows({{1, 2}, {3, 4}}), Matrix::from_rows({{5, 6}, {7, 8}})) ==
        70.0);
  Rng rng(1);
  const Matrix a = gaussian_matrix(5, rng);
  CHECK(frobenius_inner(a, a) == doctest::Approx(frobenius_norm(a) * frobenius_norm(a)).epsilon(1e-13));
  // Huge entries do not overflow the scaled norm.
  CHECK(frobenius_norm(Matrix::from_rows({{3e200, 4e200}, {0, 0}})) ==
        doctest::Approx(5e200).epsilon(1e-14));
}

TEST_CASE("inverse") {
  CHECK(inverse(Matrix::identity(3)) == Matrix::identity(3));
  const double diag[] = {2.0, 4.0};
  const double inv_diag[] = {0.5, 0.25};
  CHECK(max_abs_diff(inverse(Matrix::diagonal(diag)), Matrix::diagonal(inv_diag)) <= 1e-15);

  Rng rng(11);
  for (int i = 0; i < 10; ++i) {
    const Matrix a = near_identity(5, rng);
    const Matrix b = inverse(a);
    CHECK(max_abs_diff(matmul(a, b), Matrix::identity(5)) <= 1e-10);
    CHECK(frobenius_norm(matmul(a, b) - Matrix::identity(5)) <= 1e-8 * 5);
    CHECK(max_abs_diff(inverse(b), a) <= 1e-8);
  }
}

TEST_CASE("inverse rejects near-singular input with a sigma_min estimate") {
  const Matrix s = Matrix::from_rows({{1, 2}, {2, 4}});
  try {
    inverse(s);
    FAIL("expected SingularMatrix");
  } catch (const SingularMatrix& e) {
    CHECK(e.sigma_min() < 1e-12 * e.sigma_max());
    CHECK(e.sigma_max() == doctest::Approx(5.0));
  }
  CHECK_THROWS_AS(inverse(Matrix(3)), SingularMatrix);
}

TEST_CASE("singular values") {
  const auto id = singular_values(Matrix::identity(3));
  CHECK(id == std::vector<double>{1, 1, 1});
  const double d[] = {3.0, -4.0};
  const auto sv = singular_values(Matrix::diagonal(d));
  REQUIRE(sv.size() == 2);
  CHECK(sv[0] == doctest::Approx(4.0));
  CHECK(sv[1] == doctest::Approx(3.0));

  Rng rng(21);
  for (int i = 0; i < 10; ++i) {
    const Matrix a = gaussian_matrix(6, rng);
    const auto v = singular_values(a);
    CHECK(std::is_sorted(v.rbegin(), v.rend()));
    const double prod = std::accumulate(v.begin(), v.end(), 1.0, std::multiplies<>());
    const double sumsq = std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
    CHECK(prod == doctest::Approx(abs_det(a)).epsilon(1e-9));
    CHECK(sumsq == doctest::Approx(frobenius_norm(a) * frobenius_norm(a)).epsilon(1e-12));
  }
}

TEST_CASE("svd factors reproduce the matrix") {
  Rng rng(8);
  const Matrix a = gaussian_matrix(9, rng);
  const Svd s = svd(a);
  Matrix us = s.u;
  for (std::size_t r = 0; r < 9; ++r)
    for (std::size_t c = 0; c < 9; ++c) us(r, c) *= s.values[c];
  CHECK(max_abs_diff(matmul_nt(us, s.v), a) <= 1e-12);
  CHECK(max_abs_diff(matmul_tn(s.u, s.u), Matrix::identity(9)) <= 1e-12);
  CHECK(max_abs_diff(matmul_tn(s.v, s.v), Matrix::identity(9)) <= 1e-12);
}

TEST_CASE("singular values are orthogonally invariant") {
  Rng rng(13);
  const Matrix a = gaussian_matrix(8, rng);
  const Matrix q1 = random_orthogonal(8, rng), q2 = random_orthogonal(8, rng);
  const auto v = singular_values(a);
  const auto w = singular_values(matmul(matmul(q1, a), q2));
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(v[i] - w[i]) <= 1e-8);
}

TEST_CASE("Weyl perturbation bound") {
  Rng rng(17);
  for (int i = 0; i < 20; ++i) {
    const Matrix a = gaussian_matrix(6, rng);
    const Matrix e = gaussian_matrix(6, rng) * 0.1;
    const auto va = singular_values(a);
    const auto vae = singular_values(a + e);
    const double bound = sigma_max(e);
    for (std::size_t k = 0; k < va.size(); ++k) CHECK(std::abs(vae[k] - va[k]) <= bound + 1e-12);
  }
}

TEST_CASE("symmetric eigen and square root") {
  Rng rng(19);
  const Matrix g = gaussian_matrix(6, rng);
  const Matrix s = matmul_tn(g, g);
  const SymmetricEigen e = symmetric_eigen(s);
  CHECK(std::is_sorted(e.values.rbegin(), e.values.rend()));
  CHECK(max_abs_diff(matmul_tn(e.vectors, e.vectors), Matrix::identity(6)) <= 1e-12);
  const Matrix r = symmetric_sqrt(s);
  CHECK(testing::rel_diff(matmul(r, r), s) <= 1e-12);
  CHECK(max_abs_diff(r, r.transpose()) <= 1e-12);
}

TEST_CASE("random orthogonal") {
  Rng rng(23);
  const Matrix q1 = random_orthogonal(1, rng);
  CHECK(std::abs(q1(0, 0)) == 1.0);
  for (std::size_t d : {2, 5, 20, 64}) {
    const Matrix q = random_orthogonal(d, rng);
    CHECK(frobenius_norm(matmul_tn(q, q) - Matrix::identity(d)) <= 1e-10);
  }
  Rng r1(99), r2(99);
  CHECK(random_orthogonal(12, r1) == random_orthogonal(12, r2));
}

TEST_CASE("non-finite results are rejected") {
  const Matrix big = Matrix::from_rows({{1e200, 0}, {0, 1}});
  CHECK_THROWS_AS(matmul(big, big), NumericError);
  CHECK(big.all_finite());
}

TEST_CASE("rng determinism and ranges") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(7);
  double sum = 0.0, sumsq = 0.0;
  constexpr int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = c.uniform();
    CHECK_UNARY(u >= 0.0);
    CHECK_UNARY(u < 1.0);
    const double z = c.normal();
    sum += z;
    sumsq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sumsq / n - 1.0) < 0.02);
  for (int i = 0; i < 1000; ++i) CHECK(c.below(7) < 7u);
  CHECK(Rng::derive(1, 0) != Rng::derive(1, 1));
  CHECK(Rng::derive(1, 0) == Rng::derive(1, 0));
}
