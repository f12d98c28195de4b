#pragma once

// Synthetic squared-loss regression problems y = W* x + xi with x ~ N(0, Sigma).

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "stacklab/matrix.hpp"

namespace stacklab {

class Rng;

struct ProblemModel {
  Matrix w_star;           // ground truth W*
  Matrix sigma;            // input covariance, symmetric positive definite
  double noise_std = 0.0;  // per-coordinate std of xi
  double L = 1.0;          // sigma_max(Sigma)
  double mu = 1.0;         // sigma_min(Sigma)
  double kappa = 1.0;      // L / mu
  double sigma_min_wstar = 1.0;

  std::size_t dim() const { return w_star.dim(); }

  // Loss at the minimizer: d * noise_std^2 / 2.
  double optimal_loss() const;

  // Builds a model from explicit matrices, deriving L, mu, kappa and
  // sigma_min(W*) from singular values.
  static ProblemModel from_matrices(Matrix w_star, Matrix sigma, double noise_std);
};

// W* = I + sigma_scale * S with S = A^T A / ||A^T A||_2 for Gaussian A, and
// Sigma = Q diag(log-spaced 1..kappa_target) Q^T with Q Haar-orthogonal.
ProblemModel make_problem(std::size_t d, double kappa_target, double sigma_scale,
                          double noise_std, Rng& rng);

// 1/2 Tr((W - W*) Sigma (W - W*)^T) + d * noise_std^2 / 2.
double expected_loss(const Matrix& w, const ProblemModel& m);

// expected_loss(W) - expected_loss(W*) evaluated directly from the offset
// E = W - W*, so it stays accurate when E is far below the scale of W*.
double excess_loss(const Matrix& offset, const ProblemModel& m);

// (W - W*) Sigma.
Matrix loss_gradient(const Matrix& w, const ProblemModel& m);

struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> inputs;   // n x d, row-major
  std::vector<double> targets;  // n x d, row-major

  std::span<const double> x(std::size_t i) const { return {inputs.data() + i * d, d}; }
  std::span<const double> y(std::size_t i) const { return {targets.data() + i * d, d}; }
};

// x = Sigma^{1/2} g with g standard Gaussian, y = W* x + xi.
Dataset sample_dataset(const ProblemModel& m, std::size_t n, Rng& rng);

// Mean of 1/2 ||W x_i - y_i||^2 over `rows` (nonempty), and its gradient
// mean of (W x_i - y_i) x_i^T. The two-argument overloads use every row.
double empirical_loss(const Matrix& w, const Dataset& data, std::span<const std::size_t> rows);
Matrix empirical_gradient(const Matrix& w, const Dataset& data,
                          std::span<const std::size_t> rows);
double empirical_loss(const Matrix& w, const Dataset& data);
Matrix empirical_gradient(const Matrix& w, const Dataset& data);

// One row per sample: x_1..x_d,y_1..y_d with a header line.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace stacklab
