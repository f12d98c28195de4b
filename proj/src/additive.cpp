#include "stacklab/additive.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "stacklab/errors.hpp"
#include "stacklab/rng.hpp"

namespace stacklab {

AdditiveEnsemble::AdditiveEnsemble(std::size_t dim) : aggregate_(dim), previous_(dim) {
  if (dim == 0) throw UsageError("AdditiveEnsemble: dim must be positive");
}

Matrix AdditiveEnsemble::recompute_aggregate() const {
  Matrix sum(dim());
  for (const Matrix& f : terms_) sum += f;
  return sum;
}

void AdditiveEnsemble::push_term(Matrix term, Matrix new_aggregate) {
  terms_.push_back(std::move(term));
  previous_ = std::exchange(aggregate_, std::move(new_aggregate));
}

AdditiveEnsemble additive_stage(const AdditiveEnsemble& e, const InitScheme& scheme,
                                const ProblemModel& m, const UpdateParams& p, Rng& rng) {
  if (needs_previous_layer(scheme) && e.size() == 0) {
    throw UsageError("additive_stage: " + scheme_name(scheme) +
                     " initialization needs an existing term");
  }
  const std::size_t d = e.dim();
  Matrix init(d);
  if (const auto* r = std::get_if<RandomInit>(&scheme)) {
    init = gaussian_matrix(d, rng) * (r->scale / std::sqrt(static_cast<double>(d)));
  } else if (const auto* st = std::get_if<StackingInit>(&scheme)) {
    init = e.terms().back() * st->beta;
  } else if (const auto* n = std::get_if<NesterovInit>(&scheme)) {
    init = e.terms().back() * n->beta;
  }
  Matrix next = gd_step(e.aggregate() + init, m, p);
  Matrix term = next - e.aggregate();
  AdditiveEnsemble out = e;
  out.push_term(std::move(term), std::move(next));
  return out;
}

double fitted_log_slope(const std::vector<double>& values, std::size_t first, std::size_t last) {
  last = std::min(last, values.empty() ? 0 : values.size() - 1);
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = first; i <= last && i < values.size(); ++i) {
    if (!(values[i] > 0.0) || !std::isfinite(values[i])) continue;
    const double x = static_cast<double>(i);
    const double y = std::log(values[i]);
    n += 1;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  if (n < 2 || denom == 0.0) return 0.0;
  return (n * sxy - sx * sy) / denom;
}

RateReport additive_rate_check(double kappa, std::size_t T, Rng& rng) {
  if (T < 4) throw UsageError("additive_rate_check: T must be >= 4");
  constexpr std::size_t d = 20;
  const ProblemModel m = make_problem(d, kappa, 2.0, 0.1, rng);
  const UpdateParams p = UpdateParams::defaults_for(m);

  RateReport report;
  report.kappa = kappa;
  report.stages = T;
  report.fit_from = std::min<std::size_t>(10, T / 2);

  AdditiveEnsemble zero(d), stacked(d);
  Matrix nesterov = zero.aggregate();
  Matrix nesterov_prev = nesterov;
  report.gd_suboptimality.push_back(excess_loss(zero.aggregate() - m.w_star, m));
  report.stacking_suboptimality.push_back(excess_loss(stacked.aggregate() - m.w_star, m));
  for (std::size_t t = 0; t < T; ++t) {
    zero = additive_stage(zero, ZeroInit{}, m, p, rng);
    const InitScheme scheme =
        stacked.size() == 0 ? InitScheme{ZeroInit{}} : InitScheme{StackingInit{p.beta}};
    stacked = additive_stage(stacked, scheme, m, p, rng);
    Matrix next = nesterov_step(nesterov, nesterov_prev, m, p);
    nesterov_prev = std::exchange(nesterov, std::move(next));

    report.gd_suboptimality.push_back(excess_loss(zero.aggregate() - m.w_star, m));
    report.stacking_suboptimality.push_back(excess_loss(stacked.aggregate() - m.w_star, m));
    report.max_nesterov_deviation = std::max(report.max_nesterov_deviation,
                                             frobenius_norm(stacked.aggregate() - nesterov));
  }
  report.gd_slope = fitted_log_slope(report.gd_suboptimality, report.fit_from, T);
  report.stacking_slope = fitted_log_slope(report.stacking_suboptimality, report.fit_from, T);
  report.slope_ratio = report.gd_slope != 0.0 ? report.stacking_slope / report.gd_slope : 0.0;
  return report;
}

}  // namespace stacklab
