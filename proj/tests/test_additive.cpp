#include <doctest.h>

#include <cmath>
#include <utility>

#include "stacklab/additive.hpp"
#include "stacklab/errors.hpp"
#include "stacklab/rng.hpp"
#include "support.hpp"

using namespace stacklab;

TEST_CASE("zero scheme is gradient descent") {
  Rng rng(1);
  const ProblemModel m = make_problem(8, 20.0, 2.0, 0.1, rng);
  const UpdateParams p = UpdateParams::defaults_for(m);
  AdditiveEnsemble e(8);
  Matrix w(8);
  for (int t = 0; t < 40; ++t) {
    e = additive_stage(e, ZeroInit{}, m, p, rng);
    w = gd_step(w, m, p);
    CHECK(e.aggregate() == w);
  }
}

TEST_CASE("stacking scheme is Nesterov, stage by stage") {
  for (double kappa : {2.0, 16.0, 100.0}) {
    Rng rng(static_cast<std::uint64_t>(kappa));
    const ProblemModel m = make_problem(10, kappa, 2.0, 0.1, rng);
    const UpdateParams p = UpdateParams::defaults_for(m);
    AdditiveEnsemble e = additive_stage(AdditiveEnsemble(10), ZeroInit{}, m, p, rng);
    Matrix prev(10), cur = gd_step(prev, m, p);
    for (int t = 0; t < 60; ++t) {
      e = additive_stage(e, StackingInit{p.beta}, m, p, rng);
      Matrix next = nesterov_step(cur, prev, m, p);
      prev = std::exchange(cur, std::move(next));
      CHECK(frobenius_norm(e.aggregate() - cur) <= 1e-12);
      CHECK(frobenius_norm(e.recompute_aggregate() - e.aggregate()) <= 1e-12);
      CHECK(e.previous_aggregate() == prev);
    }
  }
}

TEST_CASE("stacking needs a term") {
  Rng rng(2);
  const ProblemModel m = make_problem(3, 4.0, 1.0, 0.1, rng);
  CHECK_THROWS_AS(additive_stage(AdditiveEnsemble(3), StackingInit{0.5}, m,
                                 UpdateParams::defaults_for(m), rng),
                  UsageError);
}

TEST_CASE("random scheme averages to gradient descent") {
  constexpr std::size_t d = 3, N = 4000;
  Rng prng(3);
  const ProblemModel m = make_problem(d, 8.0, 1.0, 0.1, prng);
  const UpdateParams p = UpdateParams::defaults_for(m);
  const Matrix gd = gd_step(Matrix(d), m, p);
  Matrix sum(d), sumsq(d);
  for (std::size_t i = 0; i < N; ++i) {
    Rng r(i + 1);
    const Matrix a = additive_stage(AdditiveEnsemble(d), RandomInit{}, m, p, r).aggregate();
    sum += a;
    for (std::size_t k = 0; k < d * d; ++k) sumsq.values()[k] += a.values()[k] * a.values()[k];
  }
  for (std::size_t k = 0; k < d * d; ++k) {
    const double mean = sum.values()[k] / N;
    const double se = std::sqrt((sumsq.values()[k] / N - mean * mean) / (N - 1));
    CHECK(std::abs(mean - gd.values()[k]) <= 4.0 * se);
  }
}

TEST_CASE("rate check") {
  Rng r1(4);
  const RateReport flat = additive_rate_check(1.0, 30, r1);
  CHECK(flat.gd_suboptimality == flat.stacking_suboptimality);

  Rng r2(5);
  const RateReport ill = additive_rate_check(100.0, 100, r2);
  CHECK(ill.fit_from == 10);
  CHECK(ill.slope_ratio >= 3.0);
  CHECK(ill.max_nesterov_deviation <= 1e-10);
  CHECK_THROWS_AS(additive_rate_check(4.0, 3, r2), UsageError);
}

TEST_CASE("fitted_log_slope") {
  std::vector<double> v;
  for (int i = 0; i < 20; ++i) v.push_back(5.0 * std::exp(-0.3 * i));
  CHECK(fitted_log_slope(v, 0, 19) == doctest::Approx(-0.3).epsilon(1e-12));
  CHECK(fitted_log_slope(v, 5, 100) == doctest::Approx(-0.3).epsilon(1e-12));
  v[3] = 0.0;
  CHECK(fitted_log_slope(v, 0, 19) == doctest::Approx(-0.3).epsilon(1e-12));
}
