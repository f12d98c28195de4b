#include "stacklab/problem.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include "stacklab/errors.hpp"
#include "stacklab/rng.hpp"

namespace stacklab {

namespace {

void require_dims(const Matrix& w, const ProblemModel& m, const char* op) {
  if (w.dim() != m.dim()) {
    throw UsageError(std::string(op) + ": predictor has dim " + std::to_string(w.dim()) +
                     ", model has dim " + std::to_string(m.dim()));
  }
}

void require_rows(const Matrix& w, const Dataset& data, std::span<const std::size_t> rows,
                  const char* op) {
  if (rows.empty()) throw UsageError(std::string(op) + ": empty batch");
  if (w.dim() != data.d) throw UsageError(std::string(op) + ": dimension mismatch");
  for (std::size_t r : rows)
    if (r >= data.n) throw UsageError(std::string(op) + ": row index out of range");
}

std::vector<std::size_t> all_rows(const Dataset& data) {
  std::vector<std::size_t> rows(data.n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace

double ProblemModel::optimal_loss() const {
  return 0.5 * static_cast<double>(dim()) * noise_std * noise_std;
}

ProblemModel ProblemModel::from_matrices(Matrix w_star, Matrix sigma, double noise_std) {
  if (w_star.dim() != sigma.dim()) throw UsageError("ProblemModel: dimension mismatch");
  if (noise_std < 0.0) throw UsageError("ProblemModel: noise_std must be nonnegative");
  ProblemModel m;
  const auto sv = singular_values(sigma);
  m.L = sv.front();
  m.mu = sv.back();
  if (!(m.mu > 0.0)) throw UsageError("ProblemModel: covariance must be positive definite");
  m.kappa = m.L / m.mu;
  m.sigma_min_wstar = stacklab::sigma_min(w_star);
  m.w_star = std::move(w_star);
  m.sigma = std::move(sigma);
  m.noise_std = noise_std;
  return m;
}

ProblemModel make_problem(std::size_t d, double kappa_target, double sigma_scale,
                          double noise_std, Rng& rng) {
  if (d == 0) throw UsageError("make_problem: d must be positive");
  if (!(kappa_target >= 1.0)) throw UsageError("make_problem: kappa_target must be >= 1");
  if (sigma_scale < 0.0) throw UsageError("make_problem: sigma_scale must be nonnegative");

  const Matrix a = gaussian_matrix(d, rng);
  Matrix s = matmul_tn(a, a);
  s *= 1.0 / symmetric_eigen(s).values.front();
  Matrix w_star = Matrix::identity(d) + s * sigma_scale;

  std::vector<double> spectrum(d, 1.0);
  for (std::size_t i = 0; i < d && d > 1; ++i) {
    spectrum[i] = std::pow(kappa_target, static_cast<double>(i) / static_cast<double>(d - 1));
  }
  spectrum.back() = kappa_target;
  const Matrix q = random_orthogonal(d, rng);
  Matrix scaled = q;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) scaled(r, c) *= spectrum[c];
  Matrix sigma = matmul_nt(scaled, q);
  sigma = (sigma + sigma.transpose()) * 0.5;

  ProblemModel m;
  m.w_star = std::move(w_star);
  m.sigma = std::move(sigma);
  m.noise_std = noise_std;
  // The spectrum is known exactly by construction.
  m.L = kappa_target;
  m.mu = 1.0;
  m.kappa = kappa_target;
  m.sigma_min_wstar = stacklab::sigma_min(m.w_star);
  return m;
}

double excess_loss(const Matrix& offset, const ProblemModel& m) {
  require_dims(offset, m, "excess_loss");
  return 0.5 * frobenius_inner(matmul(offset, m.sigma), offset);
}

double expected_loss(const Matrix& w, const ProblemModel& m) {
  require_dims(w, m, "expected_loss");
  return excess_loss(w - m.w_star, m) + m.optimal_loss();
}

Matrix loss_gradient(const Matrix& w, const ProblemModel& m) {
  require_dims(w, m, "loss_gradient");
  return matmul(w - m.w_star, m.sigma);
}

Dataset sample_dataset(const ProblemModel& m, std::size_t n, Rng& rng) {
  if (n == 0) throw UsageError("sample_dataset: n must be positive");
  const std::size_t d = m.dim();
  const Matrix root = symmetric_sqrt(m.sigma);
  Dataset data{n, d, std::vector<double>(n * d), std::vector<double>(n * d)};
  std::vector<double> g(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : g) v = rng.normal();
    double* x = data.inputs.data() + i * d;
    for (std::size_t r = 0; r < d; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += root(r, c) * g[c];
      x[r] = s;
    }
    double* y = data.targets.data() + i * d;
    for (std::size_t r = 0; r < d; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += m.w_star(r, c) * x[c];
      y[r] = s + (m.noise_std > 0.0 ? m.noise_std * rng.normal() : 0.0);
    }
  }
  return data;
}

double empirical_loss(const Matrix& w, const Dataset& data, std::span<const std::size_t> rows) {
  require_rows(w, data, rows, "empirical_loss");
  const std::size_t d = data.d;
  double total = 0.0;
  for (std::size_t i : rows) {
    const auto x = data.x(i);
    const auto y = data.y(i);
    for (std::size_t r = 0; r < d; ++r) {
      double residual = -y[r];
      for (std::size_t c = 0; c < d; ++c) residual += w(r, c) * x[c];
      total += residual * residual;
    }
  }
  return 0.5 * total / static_cast<double>(rows.size());
}

Matrix empirical_gradient(const Matrix& w, const Dataset& data,
                          std::span<const std::size_t> rows) {
  require_rows(w, data, rows, "empirical_gradient");
  const std::size_t d = data.d;
  Matrix g(d);
  std::vector<double> residual(d);
  for (std::size_t i : rows) {
    const auto x = data.x(i);
    const auto y = data.y(i);
    for (std::size_t r = 0; r < d; ++r) {
      double s = -y[r];
      for (std::size_t c = 0; c < d; ++c) s += w(r, c) * x[c];
      residual[r] = s;
    }
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) g(r, c) += residual[r] * x[c];
  }
  g *= 1.0 / static_cast<double>(rows.size());
  return g;
}

double empirical_loss(const Matrix& w, const Dataset& data) {
  const auto rows = all_rows(data);
  return empirical_loss(w, data, rows);
}

Matrix empirical_gradient(const Matrix& w, const Dataset& data) {
  const auto rows = all_rows(data);
  return empirical_gradient(w, data, rows);
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (std::size_t c = 0; c < data.d; ++c) out << (c ? "," : "") << "x" << c + 1;
  for (std::size_t c = 0; c < data.d; ++c) out << ",y" << c + 1;
  out << '\n';
  char buf[32];
  auto put = [&](double v) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, end - buf);
  };
  for (std::size_t i = 0; i < data.n; ++i) {
    for (std::size_t c = 0; c < data.d; ++c) {
      if (c) out << ',';
      put(data.x(i)[c]);
    }
    for (std::size_t c = 0; c < data.d; ++c) {
      out << ',';
      put(data.y(i)[c]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  const std::size_t columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns % 2 != 0) throw std::runtime_error(path.string() + ": odd column count");
  Dataset data;
  data.d = columns / 2;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (start <= line.size()) {
      const std::size_t comma = std::min(line.find(',', start), line.size());
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(line.data() + start, line.data() + comma, v);
      if (ec != std::errc() || ptr != line.data() + comma) {
        throw std::runtime_error(path.string() + ": malformed number on row " +
                                 std::to_string(data.n + 1));
      }
      row.push_back(v);
      start = comma + 1;
    }
    if (row.size() != columns) {
      throw std::runtime_error(path.string() + ": wrong field count on row " +
                               std::to_string(data.n + 1));
    }
    data.inputs.insert(data.inputs.end(), row.begin(), row.begin() + data.d);
    data.targets.insert(data.targets.end(), row.begin() + data.d, row.end());
    ++data.n;
  }
  return data;
}

}  // namespace stacklab
