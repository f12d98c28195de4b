#pragma once

// Boosting-style additive ensembles F_T = f_1 + ... + f_T of linear maps,
// trained stagewise with the same initialization schemes as the residual
// network. With stacking initialization f^0_{t+1} = beta f_t the aggregate
// follows Nesterov's iterates exactly; no inverse is involved.

#include <cstddef>
#include <vector>

#include "stacklab/matrix.hpp"
#include "stacklab/network.hpp"
#include "stacklab/problem.hpp"
#include "stacklab/updates.hpp"

namespace stacklab {

class Rng;

class AdditiveEnsemble {
 public:
  // Empty ensemble: F_0 = 0.
  explicit AdditiveEnsemble(std::size_t dim);

  std::size_t dim() const { return aggregate_.dim(); }
  std::size_t size() const { return terms_.size(); }
  const std::vector<Matrix>& terms() const { return terms_; }
  const Matrix& aggregate() const { return aggregate_; }
  const Matrix& previous_aggregate() const { return previous_; }

  Matrix recompute_aggregate() const;

  void push_term(Matrix term, Matrix new_aggregate);

 private:
  std::vector<Matrix> terms_;
  Matrix aggregate_;
  Matrix previous_;
};

// Appends f^0 per scheme and solves F_{t+1} = F^0 - step * grad(F^0) with
// F^0 = F_t + f^0; stores f_{t+1} = F_{t+1} - F_t. NesterovInit is treated
// like StackingInit since addition needs no correction.
AdditiveEnsemble additive_stage(const AdditiveEnsemble& e, const InitScheme& scheme,
                                const ProblemModel& m, const UpdateParams& p, Rng& rng);

struct RateReport {
  double kappa = 1.0;
  std::size_t stages = 0;
  std::size_t fit_from = 0;
  std::vector<double> gd_suboptimality;        // per stage 0..T
  std::vector<double> stacking_suboptimality;  // per stage 0..T
  double gd_slope = 0.0;        // fitted d log(suboptimality) / d stage
  double stacking_slope = 0.0;
  double slope_ratio = 0.0;     // stacking_slope / gd_slope
  double max_nesterov_deviation = 0.0;  // Frobenius, stacking vs exact Nesterov
};

// Runs Zero and Stacking(beta) ensembles for T stages on a fresh problem
// (d = 20, sigma = 2, noise 0.1) and fits log-suboptimality slopes over
// stages [min(10, T/2), T].
RateReport additive_rate_check(double kappa, std::size_t T, Rng& rng);

// Least-squares slope of log(values[i]) against i over [first, last]; entries
// that are not positive are skipped.
double fitted_log_slope(const std::vector<double>& values, std::size_t first, std::size_t last);

}  // namespace stacklab
