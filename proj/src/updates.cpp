#include "stacklab/updates.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stacklab/errors.hpp"

namespace stacklab {

namespace {

Matrix descend(const Matrix& x, const ProblemModel& m, double step) {
  return x - loss_gradient(x, m) * step;
}

// X (I - Sigma/L) + W* Sigma / L.
Matrix closed_form(const Matrix& lookahead, const ProblemModel& m, const UpdateParams& p) {
  if (std::abs(p.step * m.L - 1.0) > 1e-12) {
    throw UsageError("closed-form updates require step = 1/L");
  }
  const std::size_t d = m.dim();
  const Matrix contraction = Matrix::identity(d) - m.sigma * (1.0 / m.L);
  return matmul(lookahead, contraction) + matmul(m.w_star, m.sigma) * (1.0 / m.L);
}

}  // namespace

double momentum_for_kappa(double kappa) {
  if (!(kappa >= 1.0)) throw UsageError("momentum_for_kappa: kappa must be >= 1");
  const double root = std::sqrt(kappa);
  return (root - 1.0) / (root + 1.0);
}

UpdateParams UpdateParams::defaults_for(const ProblemModel& m,
                                        std::optional<double> beta_override) {
  UpdateParams p;
  p.beta = beta_override.value_or(momentum_for_kappa(m.kappa));
  p.step = 1.0 / m.L;
  p.validate();
  return p;
}

void UpdateParams::validate() const {
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw UsageError("UpdateParams: beta must lie in [0, 1), got " + std::to_string(beta));
  }
  if (!(step > 0.0)) throw UsageError("UpdateParams: step must be positive");
}

Matrix gd_step(const Matrix& w_t, const ProblemModel& m, const UpdateParams& p) {
  return descend(w_t, m, p.step);
}

Matrix nesterov_lookahead(const Matrix& w_t, const Matrix& w_prev, double beta) {
  return w_t + (w_t - w_prev) * beta;
}

Matrix nesterov_step(const Matrix& w_t, const Matrix& w_prev, const ProblemModel& m,
                     const UpdateParams& p) {
  return descend(nesterov_lookahead(w_t, w_prev, p.beta), m, p.step);
}

Matrix stacking_lookahead(const Matrix& w_t, const Matrix& w_prev, double beta) {
  if (beta == 0.0) return w_t;
  const Matrix layer = matmul(w_t - w_prev, inverse(w_prev));
  return w_t + matmul(layer, w_t) * beta;
}

Matrix stacking_step(const Matrix& w_t, const Matrix& w_prev, const ProblemModel& m,
                     const UpdateParams& p) {
  return descend(stacking_lookahead(w_t, w_prev, p.beta), m, p.step);
}

Matrix nesterov_step_closed(const Matrix& w_t, const Matrix& w_prev, const ProblemModel& m,
                            const UpdateParams& p) {
  return closed_form(nesterov_lookahead(w_t, w_prev, p.beta), m, p);
}

Matrix stacking_step_closed(const Matrix& w_t, const Matrix& w_prev, const ProblemModel& m,
                            const UpdateParams& p) {
  return closed_form(stacking_lookahead(w_t, w_prev, p.beta), m, p);
}

Matrix gd_step_closed(const Matrix& w_t, const ProblemModel& m) {
  UpdateParams p;
  p.step = 1.0 / m.L;
  return closed_form(w_t, m, p);
}

Matrix perturbation_from_step(const Matrix& step, const Matrix& w_prev, double beta) {
  if (beta == 0.0) return Matrix(step.dim());
  return matmul(matmul(step, inverse(w_prev)), step) * beta;
}

Matrix perturbation(const Matrix& w_t, const Matrix& w_prev, double beta) {
  const Matrix step = w_t - w_prev;
  if (beta == 0.0) return Matrix(step.dim());
  const Matrix layer = matmul(step, inverse(w_prev));
  const Matrix factored = matmul(layer, step) * beta;
  const Matrix expanded = matmul(layer, w_t) * beta - step * beta;
  const double scale = std::max(1.0, beta * frobenius_norm(matmul(layer, w_t)));
  if (max_abs_diff(factored, expanded) > 1e-10 * scale) {
    throw NumericError("perturbation: factored and expanded forms disagree");
  }
  return factored;
}

Matrix perturbed_nesterov_step(const Matrix& w_t, const Matrix& w_prev, const Matrix& delta,
                               const ProblemModel& m, const UpdateParams& p) {
  return descend(nesterov_lookahead(w_t, w_prev, p.beta) + delta, m, p.step);
}

}  // namespace stacklab
