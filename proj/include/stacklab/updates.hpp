#pragma once

// Update rules on end-to-end predictors W_t:
//
//   gradient descent   W_{t+1} = W_t - step * grad(W_t)
//   Nesterov           X = W_t + beta (W_t - W_{t-1}),
//                      W_{t+1} = X - step * grad(X)
//   stacking           X = W_t + beta (W_t - W_{t-1}) W_{t-1}^{-1} W_t,
//                      W_{t+1} = X - step * grad(X)
//
// The stacking lookahead equals the Nesterov lookahead plus the perturbation
// Delta = beta (W_t - W_{t-1}) W_{t-1}^{-1} (W_t - W_{t-1}).
//
// The generic variants evaluate grad through problem.hpp's loss_gradient. The
// *_closed variants use the squared-loss closed form
//   W_{t+1} = X (I - Sigma / L) + W* Sigma / L,
// which is a gradient *descent* step with step 1/L.

#include <optional>

#include "stacklab/matrix.hpp"
#include "stacklab/problem.hpp"

namespace stacklab {

struct UpdateParams {
  double beta = 0.0;  // momentum, in [0, 1)
  double step = 1.0;  // 1 / lambda, positive

  // beta = (sqrt(kappa) - 1) / (sqrt(kappa) + 1) and step = 1 / L, unless
  // overridden.
  static UpdateParams defaults_for(const ProblemModel& m,
                                   std::optional<double> beta_override = std::nullopt);

  void validate() const;
};

double momentum_for_kappa(double kappa);

Matrix gd_step(const Matrix& w_t, const ProblemModel& m, const UpdateParams& p);

Matrix nesterov_lookahead(const Matrix& w_t, const Matrix& w_prev, double beta);
Matrix nesterov_step(const Matrix& w_t, const Matrix& w_prev, const ProblemModel& m,
                     const UpdateParams& p);

// Throws SingularMatrix when w_prev is not invertible.
Matrix stacking_lookahead(const Matrix& w_t, const Matrix& w_prev, double beta);
Matrix stacking_step(const Matrix& w_t, const Matrix& w_prev, const ProblemModel& m,
                     const UpdateParams& p);

// Closed forms; both require p.step == 1 / m.L.
Matrix nesterov_step_closed(const Matrix& w_t, const Matrix& w_prev, const ProblemModel& m,
                            const UpdateParams& p);
Matrix stacking_step_closed(const Matrix& w_t, const Matrix& w_prev, const ProblemModel& m,
                            const UpdateParams& p);
Matrix gd_step_closed(const Matrix& w_t, const ProblemModel& m);

// Delta = beta (W_t - W_prev) W_prev^{-1} (W_t - W_prev). Also evaluates the
// expanded form beta (W_t - W_prev) W_prev^{-1} W_t - beta (W_t - W_prev) and
// throws NumericError when the two disagree by more than 1e-10 relative to
// the scale of the terms.
Matrix perturbation(const Matrix& w_t, const Matrix& w_prev, double beta);

// Same quantity from an explicitly supplied step D = W_t - W_prev, for callers
// that track iterates relative to a reference point.
Matrix perturbation_from_step(const Matrix& step, const Matrix& w_prev, double beta);

// A Nesterov step from the lookahead W_t + beta (W_t - W_prev) + delta.
Matrix perturbed_nesterov_step(const Matrix& w_t, const Matrix& w_prev, const Matrix& delta,
                               const ProblemModel& m, const UpdateParams& p);

}  // namespace stacklab
