#include "stacklab/monitor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "stacklab/errors.hpp"
#include "stacklab/rng.hpp"
#include "stacklab/updates.hpp"

namespace stacklab {

namespace {

double squared_norm(const Matrix& a) {
  const double n = frobenius_norm(a);
  return n * n;
}

// y_{t+1} = x_t - (1/L) grad(x_t), in offsets: e - e Sigma / L.
Matrix gradient_step_offset(const Matrix& x_offset, const ProblemModel& m) {
  return x_offset - matmul(x_offset, m.sigma) * (1.0 / m.L);
}

std::vector<StepRecord> build_records(const ProblemModel& m, const LemmaContext& ctx,
                                      const std::vector<IterateTriple>& iterates,
                                      const std::vector<Matrix>& deltas) {
  std::vector<StepRecord> records;
  records.reserve(iterates.size());
  const double initial_distance_sq = squared_norm(iterates.front().x);
  for (std::size_t t = 0; t < iterates.size(); ++t) {
    const IterateTriple& tri = iterates[t];
    StepRecord r;
    r.t = t;
    r.gap = excess_loss(tri.y, m);
    r.distance = frobenius_norm(tri.y);
    r.delta_norm = frobenius_norm(deltas[t]);
    if (t > 0) r.step_norm = frobenius_norm(tri.y - iterates[t - 1].y);
    if (ctx.alpha) r.alpha_budget = *ctx.alpha * r.step_norm;
    r.phi = potential(tri, ctx, m);
    r.phi_orig = potential_orig(tri, ctx, m);
    r.lemma_bound = lemma_bound(ctx, t, initial_distance_sq);
    if (ctx.delta) r.eta = eta_schedule(ctx, t);
    if (t > 0) {
      const auto sv = singular_values(m.w_star + iterates[t - 1].y);
      r.sigma_min_prev = sv.back();
      if (sv.back() > 0.0) {
        double s = 0.0;
        for (double v : sv) s += 1.0 / (v * v);
        r.inverse_norm_prev = std::sqrt(s);
      }
    }
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace

LemmaContext LemmaContext::from_model(const ProblemModel& m) {
  if (!(m.kappa > 1.0)) {
    throw UsageError("LemmaContext: the potential analysis needs kappa > 1");
  }
  LemmaContext c;
  c.L = m.L;
  c.mu = m.mu;
  c.kappa = m.kappa;
  c.d = m.dim();
  c.sigma_min_wstar = m.sigma_min_wstar;
  const double root = std::sqrt(m.kappa);
  c.beta = (root - 1.0) / (root + 1.0);
  c.tau = 1.0 / (root + 1.0);
  c.gamma = 1.0 / (root - 1.0);
  c.rho = m.mu / (4.0 * (4.0 * root - 3.0));
  if (m.kappa > 9.0) {
    const double k1 = m.kappa - 1.0;
    const double alpha = 1.0 / (k1 * std::sqrt(2.0 * root * k1 * (root - 3.0)));
    c.alpha = alpha;
    const double shrink = alpha * m.sigma_min_wstar /
                          (2.0 * c.beta * std::sqrt(static_cast<double>(c.d)) + alpha);
    c.delta = 0.5 * m.mu * shrink * shrink;
  }
  return c;
}

double LemmaContext::require_alpha() const {
  if (!alpha) throw AlphaUndefined(kappa);
  return *alpha;
}

double LemmaContext::require_delta() const {
  if (!delta) throw AlphaUndefined(kappa);
  return *delta;
}

IterateTriple IterateTriple::from_offsets(Matrix x, Matrix y, std::size_t t,
                                          const LemmaContext& ctx) {
  Matrix z = x * (1.0 / ctx.tau) - y * ((1.0 - ctx.tau) / ctx.tau);
  return IterateTriple{std::move(x), std::move(y), std::move(z), t};
}

double potential(const IterateTriple& tri, const LemmaContext& ctx, const ProblemModel& m) {
  const double weight = std::pow(1.0 + 0.5 * ctx.gamma, static_cast<double>(tri.t));
  return weight * (excess_loss(tri.y, m) + 0.5 * ctx.mu * squared_norm(tri.z) +
                   2.0 * ctx.rho * squared_norm(tri.y));
}

double potential_orig(const IterateTriple& tri, const LemmaContext& ctx, const ProblemModel& m) {
  const double weight = std::pow(1.0 + ctx.gamma, static_cast<double>(tri.t));
  return weight * (excess_loss(tri.y, m) + 0.5 * ctx.mu * squared_norm(tri.z));
}

double lemma_bound(const LemmaContext& ctx, std::size_t t, double initial_distance_sq) {
  const double root = std::sqrt(ctx.kappa);
  const double rate = (2.0 * root - 2.0) / (2.0 * root - 1.0);
  const double constant = ctx.L + 8.0 * root * ctx.mu / (4.0 * (4.0 * root - 3.0));
  return std::pow(rate, static_cast<double>(t)) * constant * initial_distance_sq;
}

double theorem_radius(const ProblemModel&, const LemmaContext& ctx) {
  return ctx.require_delta() / (2.0 * (1.0 + ctx.rho));
}

double radius_constant(const ProblemModel& m, const LemmaContext& ctx) {
  const double scale = static_cast<double>(m.dim()) * std::pow(m.L, 4) /
                       (std::pow(m.mu, 5) * m.sigma_min_wstar * m.sigma_min_wstar);
  return theorem_radius(m, ctx) * scale;
}

double eta_schedule(const LemmaContext& ctx, std::size_t t) {
  const double delta = ctx.require_delta();
  return std::sqrt(2.0 * delta / ctx.mu *
                   std::pow(1.0 + 0.5 * ctx.gamma, -static_cast<double>(t)));
}

std::size_t warmup_length(const ProblemModel& m, double initial_gap, double C) {
  if (!(initial_gap > 0.0)) throw UsageError("warmup_length: initial_gap must be positive");
  if (!(C > 0.0)) throw UsageError("warmup_length: C must be positive");
  const double arg = static_cast<double>(m.dim()) * std::pow(m.L, 4) /
                     (C * std::pow(m.mu, 5) * m.sigma_min_wstar * m.sigma_min_wstar) *
                     initial_gap;
  if (arg <= 1.0) return 0;
  return static_cast<std::size_t>(std::ceil(m.kappa * std::log(arg)));
}

PerturbationSource zero_perturbation() {
  return [](const InjectionRequest& req) { return Matrix(req.y_t.dim()); };
}

PerturbationSource budget_perturbation(const LemmaContext& ctx, Rng& rng, double fraction) {
  const double alpha = ctx.require_alpha();
  return [alpha, fraction, rng = &rng](const InjectionRequest& req) {
    Matrix direction = gaussian_matrix(req.y_t.dim(), *rng);
    const double budget = fraction * alpha * frobenius_norm(req.y_t - req.y_prev);
    const double norm = frobenius_norm(direction);
    if (budget == 0.0 || norm == 0.0) return Matrix(req.y_t.dim());
    return direction * (budget / norm);
  };
}

PerturbationSource stacking_perturbation(const ProblemModel& m, const LemmaContext& ctx) {
  return [&m, beta = ctx.beta](const InjectionRequest& req) {
    return perturbation_from_step(req.y_t - req.y_prev, m.w_star + req.y_prev, beta);
  };
}

PerturbedRun run_perturbed_nesterov_from_offset(const ProblemModel& m, const LemmaContext& ctx,
                                                const Matrix& x0_offset, std::size_t T,
                                                const PerturbationSource& source) {
  if (x0_offset.dim() != m.dim()) throw UsageError("run_perturbed_nesterov: dimension mismatch");
  std::vector<IterateTriple> iterates;
  std::vector<Matrix> deltas;
  iterates.reserve(T + 1);
  deltas.reserve(T + 1);
  iterates.push_back(IterateTriple::from_offsets(x0_offset, x0_offset, 0, ctx));
  deltas.emplace_back(m.dim());

  for (std::size_t t = 0; t < T; ++t) {
    const IterateTriple& cur = iterates.back();
    Matrix y_next = gradient_step_offset(cur.x, m);
    Matrix delta = (t + 1 == T) ? Matrix(m.dim())
                                : source(InjectionRequest{t + 1, y_next, cur.y});
    Matrix x_next = y_next + (y_next - cur.y) * ctx.beta + delta;
    iterates.push_back(IterateTriple::from_offsets(std::move(x_next), std::move(y_next), t + 1, ctx));
    deltas.push_back(std::move(delta));
  }
  PerturbedRun run;
  run.records = build_records(m, ctx, iterates, deltas);
  run.iterates = std::move(iterates);
  return run;
}

PerturbedRun run_perturbed_nesterov(const ProblemModel& m, const LemmaContext& ctx,
                                    const Matrix& x0, std::size_t T,
                                    const PerturbationSource& source) {
  return run_perturbed_nesterov_from_offset(m, ctx, x0 - m.w_star, T, source);
}

PerturbedRun assemble_run(const ProblemModel& m, const LemmaContext& ctx,
                          const std::vector<Matrix>& ys, const std::vector<Matrix>& xs) {
  if (ys.size() != xs.size() || ys.empty()) {
    throw UsageError("assemble_run: need matching, nonempty iterate lists");
  }
  std::vector<IterateTriple> iterates;
  std::vector<Matrix> deltas;
  for (std::size_t t = 0; t < ys.size(); ++t) {
    Matrix y = ys[t] - m.w_star;
    Matrix x = xs[t] - m.w_star;
    const Matrix& y_prev = t == 0 ? y : iterates.back().y;
    deltas.push_back(x - (y + (y - y_prev) * ctx.beta));
    iterates.push_back(IterateTriple::from_offsets(std::move(x), std::move(y), t, ctx));
  }
  PerturbedRun run;
  run.records = build_records(m, ctx, iterates, deltas);
  run.iterates = std::move(iterates);
  return run;
}

std::string Certificate::summary() const {
  std::ostringstream os;
  os.precision(6);
  os << (ok() ? "certified" : "VIOLATED") << " through stage " << certified_through;
  if (!budget_held) os << " (perturbation budget lapsed)";
  for (const Violation& v : violations) {
    os << "\n  " << v.invariant << " at t=" << v.t << ": " << v.lhs << " > " << v.rhs;
  }
  return os.str();
}

Certificate certify(const PerturbedRun& run, const LemmaContext& ctx,
                    const CertifyOptions& options) {
  Certificate cert;
  const auto& rec = run.records;
  if (rec.empty()) return cert;
  const double phi0 = rec.front().phi;
  auto fail = [&](const char* what, std::size_t t, double lhs, double rhs) {
    cert.violations.push_back(Violation{what, t, lhs, rhs});
  };

  std::optional<double> eta_prev;
  if (options.theorem_checks) {
    const double delta = ctx.require_delta();
    const double eta0 = eta_schedule(ctx, 0);
    if (rec[0].distance > eta0) fail("distance_within_eta", 0, rec[0].distance, eta0);
    if (rec[0].phi > delta * (1.0 + 1e-9)) fail("potential_below_delta", 0, rec[0].phi, delta);
    eta_prev = eta0;
  }

  for (std::size_t t = 1; t < rec.size(); ++t) {
    const StepRecord& r = rec[t];
    const bool within_budget = r.alpha_budget
                                   ? r.delta_norm <= *r.alpha_budget * (1.0 + 1e-9)
                                   : r.delta_norm == 0.0;
    if (!within_budget) {
      cert.budget_held = false;
      if (options.require_budget) {
        fail("delta_budget", t, r.delta_norm, r.alpha_budget.value_or(0.0));
      }
      break;
    }

    const double phi_limit = rec[t - 1].phi * (1.0 + options.phi_relative_slack) +
                             options.phi_absolute_fraction * phi0;
    if (r.phi > phi_limit) fail("potential_monotone", t, r.phi, phi_limit);

    if (t >= 2) {
      const double bound = r.lemma_bound * (1.0 + options.lemma_relative_slack);
      if (r.gap > bound) fail("lemma_bound", t, r.gap, bound);
    }

    if (options.theorem_checks) {
      const double delta = ctx.require_delta();
      const double eta = eta_schedule(ctx, t);
      if (r.distance > eta) fail("distance_within_eta", t, r.distance, eta);
      if (r.phi > delta * (1.0 + 1e-9)) fail("potential_below_delta", t, r.phi, delta);
      const double floor = ctx.sigma_min_wstar - *eta_prev - 1e-8;
      if (r.sigma_min_prev && *r.sigma_min_prev < floor) {
        fail("sigma_min_lower_bound", t, floor, *r.sigma_min_prev);
      }
      const double inv_limit =
          std::sqrt(static_cast<double>(ctx.d)) / (ctx.sigma_min_wstar - *eta_prev) + 1e-6;
      if (r.inverse_norm_prev && *r.inverse_norm_prev > inv_limit) {
        fail("inverse_norm_bound", t, *r.inverse_norm_prev, inv_limit);
      }
      eta_prev = eta;
    }
    cert.certified_through = t;
  }
  return cert;
}

Matrix near_optimum_offset(const ProblemModel& m, const LemmaContext& ctx, double fraction,
                           Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw UsageError("near_optimum_offset: fraction must lie in (0, 1]");
  }
  const double radius = theorem_radius(m, ctx);
  Matrix e = gaussian_matrix(m.dim(), rng);
  e *= std::sqrt(fraction * radius / excess_loss(e, m));
  return e;
}

WarmupRun run_warmup_then_stacking(const ProblemModel& m, const LemmaContext& ctx,
                                   const Matrix& x0, double C, std::size_t stacking_stages) {
  WarmupRun out;
  Matrix e = x0 - m.w_star;
  const double gap0 = excess_loss(e, m);
  out.warmup_stages = warmup_length(m, gap0, C);
  out.warmup_gaps.push_back(gap0);
  for (std::size_t t = 0; t < out.warmup_stages; ++t) {
    e = gradient_step_offset(e, m);
    out.warmup_gaps.push_back(excess_loss(e, m));
  }
  out.stacking = run_perturbed_nesterov_from_offset(m, ctx, e, stacking_stages,
                                                    stacking_perturbation(m, ctx));
  return out;
}

}  // namespace stacklab
