#pragma once

// Runtime certification of the perturbed-Nesterov analysis.
//
// The iteration being certified is
//   y_{t+1} = x_t - (1/L) grad(x_t)
//   x_{t+1} = y_{t+1} + beta (y_{t+1} - y_t) + Delta_{t+1},     x_0 = y_0,
// with auxiliary iterate z_t = x_t / tau - (1 - tau) / tau * y_t and potential
//   Phi(t) = (1 + gamma/2)^t [ (l(y_t) - l*) + mu/2 |z_t - x*|^2 + 2 rho |y_t - x*|^2 ].
// Stacking on a residual linear network is this iteration with y_t = W_t and
// Delta_t = beta (W_t - W_{t-1}) W_{t-1}^{-1} (W_t - W_{t-1}).
//
// Iterates are carried as offsets from x* = W*. The potential multiplies
// geometrically shrinking distances by (1 + gamma/2)^t, so absolute
// coordinates would stall at rounding distance from W* and make Phi grow.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stacklab/matrix.hpp"
#include "stacklab/problem.hpp"

namespace stacklab {

class Rng;

struct LemmaContext {
  double L = 1.0;
  double mu = 1.0;
  double kappa = 1.0;
  double beta = 0.0;   // (sqrt(kappa) - 1) / (sqrt(kappa) + 1)
  double tau = 0.5;    // 1 / (sqrt(kappa) + 1)
  double gamma = 0.0;  // 1 / (sqrt(kappa) - 1)
  double rho = 0.0;    // mu / (4 (4 sqrt(kappa) - 3))
  // 1 / ((kappa - 1) sqrt(2 sqrt(kappa) (kappa - 1) (sqrt(kappa) - 3))); kappa > 9 only.
  std::optional<double> alpha;
  // mu/2 (alpha sigma_min(W*) / (2 beta sqrt(d) + alpha))^2; kappa > 9 only.
  std::optional<double> delta;
  std::size_t d = 1;
  double sigma_min_wstar = 1.0;

  // Requires kappa > 1.
  static LemmaContext from_model(const ProblemModel& m);

  // Throw AlphaUndefined when kappa <= 9.
  double require_alpha() const;
  double require_delta() const;
};

// Offsets from x*.
struct IterateTriple {
  Matrix x;
  Matrix y;
  Matrix z;
  std::size_t t = 0;

  static IterateTriple from_offsets(Matrix x, Matrix y, std::size_t t, const LemmaContext& ctx);
};

double potential(const IterateTriple& tri, const LemmaContext& ctx, const ProblemModel& m);
double potential_orig(const IterateTriple& tri, const LemmaContext& ctx, const ProblemModel& m);

// ((2 sqrt(kappa) - 2) / (2 sqrt(kappa) - 1))^t (L + 8 sqrt(kappa) mu / (4 (4 sqrt(kappa) - 3)))
//   * initial_distance_sq
double lemma_bound(const LemmaContext& ctx, std::size_t t, double initial_distance_sq);

// delta / (2 (1 + rho)): the suboptimality radius inside which the stacking
// induction starts.
double theorem_radius(const ProblemModel& m, const LemmaContext& ctx);

// theorem_radius * d L^4 / (mu^5 sigma_min(W*)^2): the constant hidden in the
// radius' O(mu^5 / (d L^4) sigma_min(W*)^2) form.
double radius_constant(const ProblemModel& m, const LemmaContext& ctx);

// sqrt(2 delta / mu * (1 + gamma/2)^{-t}).
double eta_schedule(const LemmaContext& ctx, std::size_t t);

// Smallest T0 >= 0 with T0 >= kappa log(d L^4 / (C mu^5 sigma_min(W*)^2) * initial_gap).
std::size_t warmup_length(const ProblemModel& m, double initial_gap, double C);

struct InjectionRequest {
  std::size_t t;         // index of the Delta being produced
  const Matrix& y_t;     // offset
  const Matrix& y_prev;  // offset
};

using PerturbationSource = std::function<Matrix(const InjectionRequest&)>;

PerturbationSource zero_perturbation();
// Uniformly random direction scaled to fraction * alpha * |y_t - y_{t-1}|.
PerturbationSource budget_perturbation(const LemmaContext& ctx, Rng& rng, double fraction = 1.0);
// beta (W_t - W_{t-1}) W_{t-1}^{-1} (W_t - W_{t-1}) with W = x* + offset.
PerturbationSource stacking_perturbation(const ProblemModel& m, const LemmaContext& ctx);

struct StepRecord {
  std::size_t t = 0;
  double gap = 0.0;             // l(y_t) - l*
  double distance = 0.0;        // |y_t - x*|
  double step_norm = 0.0;       // |y_t - y_{t-1}|
  double delta_norm = 0.0;      // |Delta_t|
  std::optional<double> alpha_budget;  // alpha |y_t - y_{t-1}|
  double phi = 0.0;
  double phi_orig = 0.0;
  double lemma_bound = 0.0;
  std::optional<double> eta;
  // Singular value facts about W_{t-1} = x* + y_{t-1} (t >= 1).
  std::optional<double> sigma_min_prev;
  std::optional<double> inverse_norm_prev;
};

struct PerturbedRun {
  std::vector<IterateTriple> iterates;  // t = 0..T
  std::vector<StepRecord> records;      // t = 0..T
};

// Delta_T is forced to zero; Delta_0 = 0 since x_0 = y_0.
PerturbedRun run_perturbed_nesterov(const ProblemModel& m, const LemmaContext& ctx,
                                    const Matrix& x0, std::size_t T,
                                    const PerturbationSource& source);
PerturbedRun run_perturbed_nesterov_from_offset(const ProblemModel& m, const LemmaContext& ctx,
                                                const Matrix& x0_offset, std::size_t T,
                                                const PerturbationSource& source);

// Builds records for an externally computed trajectory y_0..y_T (absolute)
// with lookaheads x_0..x_T (absolute). Used to attach certifier columns to
// harness traces.
PerturbedRun assemble_run(const ProblemModel& m, const LemmaContext& ctx,
                          const std::vector<Matrix>& ys, const std::vector<Matrix>& xs);

struct CertifyOptions {
  // Claim 1 check: Phi(t) <= Phi(t-1) * (1 + phi_relative_slack) + phi_absolute_fraction * Phi(0).
  double phi_relative_slack = 0.0;
  double phi_absolute_fraction = 1e-9;
  double lemma_relative_slack = 1e-9;
  // Treat a Delta over budget as a violation instead of a lapsed precondition.
  bool require_budget = false;
  // Theorem induction checks: |y_t - x*| <= eta_t, Phi(t) <= delta and the
  // singular value facts for W_{t-1}.
  bool theorem_checks = false;
};

struct Violation {
  std::string invariant;
  std::size_t t = 0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct Certificate {
  // Stages whose claims were checked; precondition lapses stop the checks.
  std::size_t certified_through = 0;
  bool budget_held = true;
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

Certificate certify(const PerturbedRun& run, const LemmaContext& ctx,
                    const CertifyOptions& options = {});

// W_0 = W* + E with excess_loss(E) = fraction * theorem_radius in a random
// direction. The run started from it has W_1 = gd(W_0), inside the radius too.
Matrix near_optimum_offset(const ProblemModel& m, const LemmaContext& ctx, double fraction,
                           Rng& rng);

struct WarmupRun {
  std::size_t warmup_stages = 0;
  std::vector<double> warmup_gaps;  // t = 0..T0
  PerturbedRun stacking;            // starts from the last warmup iterate
};

// Zero-initialization stages (gradient descent) for warmup_length(...)
// stages, then stacking from the reached point.
WarmupRun run_warmup_then_stacking(const ProblemModel& m, const LemmaContext& ctx,
                                   const Matrix& x0, double C, std::size_t stacking_stages);

}  // namespace stacklab
