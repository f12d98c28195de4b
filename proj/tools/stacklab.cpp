// stacklab: command-line front end.
//
//   stacklab gen     [--config c.json] [flags]   problem snapshot (+ datasets with --datasets)
//   stacklab run     [--config c.json] [flags]   trace.csv, trace.svg, snapshot.json
//   stacklab sweep   [--config c.json] [flags] --kappas 1,10,100 --modes gd,stacking --seeds 1,2
//   stacklab certify --snapshot snapshot.json
//   stacklab plot    --csv a.csv [--csv b.csv ...] --out plot.svg
//
// Exit codes: 0 ok, 1 I/O or other failure, 2 config error, 3 singular
// matrix under the abort policy, 4 certification failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stacklab/errors.hpp"
#include "stacklab/harness.hpp"
#include "stacklab/monitor.hpp"
#include "stacklab/problem.hpp"
#include "stacklab/rng.hpp"
#include "stacklab/trace_io.hpp"

namespace fs = std::filesystem;
using namespace stacklab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSingular = 3;
constexpr int kExitCertification = 4;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> d;
  std::optional<double> kappa;
  std::optional<double> sigma_scale;
  std::optional<double> noise_std;
  std::optional<std::size_t> T;
  std::optional<std::string> mode;
  std::optional<std::string> beta;
  std::optional<std::size_t> inner_steps;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> n_train;
  std::optional<std::size_t> n_test;
  std::optional<bool> certify;
  std::optional<double> warmup_C;
  std::optional<std::string> on_singular;
  std::optional<std::string> output_dir;
  std::optional<std::string> learning_rate;
  std::optional<double> random_scale;
  std::optional<std::string> start;
  std::optional<double> start_fraction;
  std::optional<bool> timing;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config file");
    app->add_option("--seed", seed);
    app->add_option("--d", d);
    app->add_option("--kappa", kappa);
    app->add_option("--sigma_scale", sigma_scale);
    app->add_option("--noise_std", noise_std);
    app->add_option("--T", T);
    app->add_option("--mode", mode);
    app->add_option("--beta", beta, "auto or a number");
    app->add_option("--inner_steps", inner_steps);
    app->add_option("--batch_size", batch_size);
    app->add_option("--n_train", n_train);
    app->add_option("--n_test", n_test);
    app->add_option("--certify", certify);
    app->add_option("--warmup_C", warmup_C);
    app->add_option("--on_singular", on_singular);
    app->add_option("--output_dir", output_dir);
    app->add_option("--learning_rate", learning_rate, "auto or a number");
    app->add_option("--random_scale", random_scale);
    app->add_option("--start", start);
    app->add_option("--start_fraction", start_fraction);
    app->add_option("--timing", timing);
  }

  static std::optional<double> auto_or_number(const std::string& s, const char* name) {
    if (s == "auto") return std::nullopt;
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("--") + name + ": expected auto or a number, got '" + s + "'");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c = config.empty() ? ExperimentConfig{} : ExperimentConfig::load(config);
    if (seed) c.seed = *seed;
    if (d) c.d = *d;
    if (kappa) c.kappa = *kappa;
    if (sigma_scale) c.sigma_scale = *sigma_scale;
    if (noise_std) c.noise_std = *noise_std;
    if (T) c.T = *T;
    if (mode) c.mode = parse_mode(*mode);
    if (beta) c.beta = auto_or_number(*beta, "beta");
    if (inner_steps) c.inner_steps = *inner_steps;
    if (batch_size) c.batch_size = *batch_size;
    if (n_train) c.n_train = *n_train;
    if (n_test) c.n_test = *n_test;
    if (certify) c.certify = *certify;
    if (warmup_C) c.warmup_C = *warmup_C;
    if (on_singular) c.on_singular = parse_singular_policy(*on_singular);
    if (output_dir) c.output_dir = *output_dir;
    if (learning_rate) c.learning_rate = auto_or_number(*learning_rate, "learning_rate");
    if (random_scale) c.random_scale = *random_scale;
    if (start) c.start = parse_start(*start);
    if (start_fraction) c.start_fraction = *start_fraction;
    if (timing) c.timing = *timing;
    c.validate();
    return c;
  }
};

fs::path prepare_output(const ExperimentConfig& cfg) {
  const fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

int cmd_gen(const Overrides& o, bool datasets) {
  const ExperimentConfig cfg = o.resolve();
  const fs::path dir = prepare_output(cfg);
  Rng problem_rng(Rng::derive(cfg.seed, 0));
  const ProblemModel m = make_problem(cfg.d, cfg.kappa, cfg.sigma_scale, cfg.noise_std, problem_rng);
  write_text_file(dir / "problem.json", problem_json(m));
  if (datasets) {
    Rng data_rng(Rng::derive(cfg.seed, 2));
    write_dataset_csv(sample_dataset(m, cfg.n_train, data_rng), dir / "train.csv");
    write_dataset_csv(sample_dataset(m, cfg.n_test, data_rng), dir / "test.csv");
  }
  std::cout << "wrote " << (dir / "problem.json").string() << "  L=" << m.L << " mu=" << m.mu
            << " sigma_min(W*)=" << m.sigma_min_wstar << "\n";
  return kExitOk;
}

int report_certificate(const Certificate& cert) {
  std::cout << cert.summary() << "\n";
  return cert.ok() ? kExitOk : kExitCertification;
}

int cmd_run(const Overrides& o) {
  const ExperimentConfig cfg = o.resolve();
  const fs::path dir = prepare_output(cfg);
  const ExperimentResult r = run_experiment(cfg);
  emit_csv(r.traces, dir / "trace.csv");
  emit_plot({PlotSeries{std::string(to_string(cfg.mode)), r.traces}}, dir / "trace.svg",
            std::string(to_string(cfg.mode)) + ", kappa " + format_number(cfg.kappa));
  write_text_file(dir / "snapshot.json", snapshot_json(r));
  write_text_file(dir / "config.json", cfg.to_json());
  const StageTrace& last = r.traces.back();
  std::cout << to_string(cfg.mode) << " kappa=" << cfg.kappa << " stages=" << last.stage
            << " final suboptimality=" << format_number(last.suboptimality) << "\n";
  if (r.warmup_stages > 0) std::cout << "warmup stages: " << r.warmup_stages << "\n";
  if (!r.fallback_stages.empty()) {
    std::cout << "gradient-descent fallback at " << r.fallback_stages.size() << " stage(s)\n";
  }
  if (r.certificate) return report_certificate(*r.certificate);
  return kExitOk;
}

template <class T, class F>
std::vector<T> parse_list(const std::string& s, F parse) {
  std::vector<T> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = std::min(s.find(',', start), s.size());
    const std::string item = s.substr(start, comma - start);
    if (!item.empty()) out.push_back(parse(item));
    start = comma + 1;
  }
  return out;
}

int cmd_sweep(const Overrides& o, const std::string& kappas, const std::string& modes,
              const std::string& seeds, std::size_t threads) {
  const ExperimentConfig base = o.resolve();
  const fs::path dir = prepare_output(base);
  auto number = [](const std::string& s) {
    try {
      return std::stod(s);
    } catch (const std::exception&) {
      throw ConfigError("--kappas: bad number '" + s + "'");
    }
  };
  auto seed = [](const std::string& s) {
    try {
      return static_cast<std::uint64_t>(std::stoull(s));
    } catch (const std::exception&) {
      throw ConfigError("--seeds: bad seed '" + s + "'");
    }
  };
  const auto ks = kappas.empty() ? std::vector<double>{base.kappa} : parse_list<double>(kappas, number);
  const auto ms = modes.empty() ? std::vector<Mode>{base.mode}
                                : parse_list<Mode>(modes, [](const std::string& s) { return parse_mode(s); });
  const auto ss = seeds.empty() ? std::vector<std::uint64_t>{base.seed}
                                : parse_list<std::uint64_t>(seeds, seed);
  const SweepReport report = run_sweep(base, ks, ms, ss, threads);
  write_text_file(dir / "sweep.csv", format_sweep_csv(report));
  const auto series = sweep_series(report);
  if (!series.empty()) emit_plot(series, dir / "sweep.svg", "suboptimality by mode and kappa");

  bool certification_failed = false;
  for (const SweepCell& c : report.cells) {
    if (!c.error.empty()) {
      std::cerr << "cell kappa=" << c.kappa << " mode=" << to_string(c.mode) << " seed=" << c.seed
                << " failed: " << c.error << "\n";
    }
    if (c.certificate && !c.certificate->ok()) certification_failed = true;
  }
  std::cout << "sweep: " << report.cells.size() << " cells, " << report.failures()
            << " failed; wrote " << (dir / "sweep.csv").string() << "\n";
  return certification_failed ? kExitCertification : kExitOk;
}

int cmd_certify(const std::string& snapshot_path) {
  Snapshot snap;
  try {
    snap = parse_snapshot(read_text_file(snapshot_path));
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  const LemmaContext ctx = LemmaContext::from_model(snap.model);
  const PerturbedRun run = reassemble(snap, ctx);
  if (!ctx.alpha) std::cout << "kappa <= 9: perturbation budget checks are N/A\n";
  return report_certificate(certify(run, ctx, certify_options_for(snap.config)));
}

int cmd_plot(const std::vector<std::string>& csvs, const std::string& out, const std::string& title) {
  std::vector<PlotSeries> series;
  for (const std::string& p : csvs) {
    series.push_back(PlotSeries{fs::path(p).stem().string(), read_csv(p)});
  }
  emit_plot(series, out, title);
  std::cout << "wrote " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stacklab: stacking initialization as perturbed Nesterov acceleration"};
  app.require_subcommand(1);

  Overrides gen_o, run_o, sweep_o;
  bool datasets = false;
  auto* gen = app.add_subcommand("gen", "write a problem snapshot");
  gen_o.attach(gen);
  gen->add_flag("--datasets", datasets, "also write train.csv and test.csv");

  auto* run = app.add_subcommand("run", "run one experiment");
  run_o.attach(run);

  std::string kappas, modes, seeds;
  std::size_t threads = 0;
  auto* sweep = app.add_subcommand("sweep", "run the kappa x mode x seed grid");
  sweep_o.attach(sweep);
  sweep->add_option("--kappas", kappas, "comma-separated");
  sweep->add_option("--modes", modes, "comma-separated");
  sweep->add_option("--seeds", seeds, "comma-separated");
  sweep->add_option("--threads", threads, "worker threads (0: all cores)");

  std::string snapshot;
  auto* cert = app.add_subcommand("certify", "re-run the monitor on a stored snapshot");
  cert->add_option("--snapshot", snapshot)->required();

  std::vector<std::string> csvs;
  std::string out = "plot.svg", title = "suboptimality";
  auto* plot = app.add_subcommand("plot", "plot stored traces");
  plot->add_option("--csv", csvs)->required();
  plot->add_option("--out", out);
  plot->add_option("--title", title);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen(gen_o, datasets);
    if (*run) return cmd_run(run_o);
    if (*sweep) return cmd_sweep(sweep_o, kappas, modes, seeds, threads);
    if (*cert) return cmd_certify(snapshot);
    if (*plot) return cmd_plot(csvs, out, title);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SingularMatrix& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitSingular;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
