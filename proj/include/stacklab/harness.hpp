#pragma once

// Experiment configuration, orchestration and snapshots.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stacklab/matrix.hpp"
#include "stacklab/monitor.hpp"
#include "stacklab/problem.hpp"
#include "stacklab/trace_io.hpp"

namespace stacklab {

// gd, stacking and nesterov follow the closed-form updates on the end-to-end
// product. zero and random grow a residual network training only the new
// layer. The *_all modes train every layer on minibatches.
enum class Mode { gd, stacking, nesterov, zero, random, stacking_all, nesterov_init_all, random_all };
enum class SingularPolicy { abort, fallback_gd };
// Starting product W_0: the identity, a random point inside the stacking
// radius, or the identity followed by a zero-initialization warmup.
enum class StartKind { identity, near_optimum, warmup };

std::string_view to_string(Mode m);
std::string_view to_string(SingularPolicy p);
std::string_view to_string(StartKind s);
Mode parse_mode(std::string_view s);
SingularPolicy parse_singular_policy(std::string_view s);
StartKind parse_start(std::string_view s);

bool is_closed_form(Mode m);
bool is_all_layers(Mode m);

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t d = 20;
  double kappa = 10.0;
  double sigma_scale = 2.0;
  double noise_std = 0.1;
  std::size_t T = 10;
  Mode mode = Mode::stacking;
  std::optional<double> beta;  // nullopt: (sqrt(kappa) - 1) / (sqrt(kappa) + 1)
  std::size_t inner_steps = 2;
  std::size_t batch_size = 32;
  std::size_t n_train = 1024;
  std::size_t n_test = 1024;
  bool certify = false;
  double warmup_C = 1.0;
  SingularPolicy on_singular = SingularPolicy::abort;
  std::string output_dir = ".";

  // All-layers learning rate; nullopt means 1 / (d L).
  std::optional<double> learning_rate;
  double random_scale = 1.0;
  StartKind start = StartKind::identity;
  double start_fraction = 0.5;  // near_optimum: gap as a fraction of the radius
  bool timing = false;          // fill wall_ns

  // Throws ConfigError.
  void validate() const;

  std::string to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static ExperimentConfig from_json(std::string_view text);
  static ExperimentConfig load(const std::filesystem::path& path);
};

struct ExperimentResult {
  ExperimentConfig config;
  ProblemModel model;
  std::vector<StageTrace> traces;   // stages 0..T (plus warmup stages)
  std::vector<Matrix> products;     // W_0..W_T
  std::vector<Matrix> lookaheads;   // closed-form modes with momentum
  std::vector<Matrix> layers;       // network modes
  std::size_t warmup_stages = 0;
  std::vector<std::size_t> fallback_stages;
  std::optional<Certificate> certificate;
};

// Deterministic in the config. Throws ConfigError, and SingularMatrix under
// the abort policy.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct SweepCell {
  double kappa = 1.0;
  Mode mode = Mode::gd;
  std::uint64_t seed = 0;
  std::vector<StageTrace> traces;
  std::optional<Certificate> certificate;
  std::string error;  // empty on success
};

struct SweepReport {
  std::vector<SweepCell> cells;  // kappa-major, then mode, then seed
  std::size_t failures() const;
};

// Cells run on up to `threads` workers (0: hardware concurrency) and are
// merged in cell order.
SweepReport run_sweep(const ExperimentConfig& base, const std::vector<double>& kappas,
                      const std::vector<Mode>& modes, const std::vector<std::uint64_t>& seeds,
                      std::size_t threads = 0);

// kappa,mode,seed,<trace columns>; failed cells contribute no rows.
std::string format_sweep_csv(const SweepReport& report);
// One series per (kappa, mode), suboptimality averaged over seeds.
std::vector<PlotSeries> sweep_series(const SweepReport& report);

// Configuration, problem, and trajectory for offline certification.
std::string snapshot_json(const ExperimentResult& result);
struct Snapshot {
  ExperimentConfig config;
  ProblemModel model;
  std::vector<Matrix> products;
  std::vector<Matrix> lookaheads;
  std::vector<Matrix> layers;
  std::size_t warmup_stages = 0;
};
Snapshot parse_snapshot(std::string_view text);

// Problem-only snapshot written by `stacklab gen`.
std::string problem_json(const ProblemModel& m);
ProblemModel parse_problem(std::string_view text);

// Re-runs the monitor on the post-warmup part of a stored trajectory.
// Requires lookaheads (modes stacking and nesterov) and kappa > 1.
PerturbedRun reassemble(const Snapshot& snap, const LemmaContext& ctx);
CertifyOptions certify_options_for(const ExperimentConfig& cfg);

}  // namespace stacklab
