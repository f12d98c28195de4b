#include "stacklab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <thread>
#include <utility>

#include <json.hpp>

#include "stacklab/errors.hpp"
#include "stacklab/network.hpp"
#include "stacklab/rng.hpp"
#include "stacklab/updates.hpp"

namespace stacklab {

using Json = nlohmann::ordered_json;

namespace {

constexpr std::pair<Mode, std::string_view> kModes[] = {
    {Mode::gd, "gd"},
    {Mode::stacking, "stacking"},
    {Mode::nesterov, "nesterov"},
    {Mode::zero, "zero"},
    {Mode::random, "random"},
    {Mode::stacking_all, "stacking_all"},
    {Mode::nesterov_init_all, "nesterov_init_all"},
    {Mode::random_all, "random_all"},
};

// Independent substreams of the experiment seed.
enum Stream : std::uint64_t { kProblemStream = 0, kRunStream = 1, kDataStream = 2, kStartStream = 3 };

Json matrix_to_json(const Matrix& a) {
  Json j;
  j["dim"] = a.dim();
  j["data"] = std::vector<double>(a.values().begin(), a.values().end());
  return j;
}

Matrix matrix_from_json(const Json& j) {
  const auto d = j.at("dim").get<std::size_t>();
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != d * d) throw ConfigError("snapshot: matrix data has wrong length");
  return Matrix(d, std::move(data));
}

Json matrices_to_json(const std::vector<Matrix>& ms) {
  Json arr = Json::array();
  for (const Matrix& a : ms) arr.push_back(matrix_to_json(a));
  return arr;
}

std::vector<Matrix> matrices_from_json(const Json& j) {
  std::vector<Matrix> out;
  for (const Json& e : j) out.push_back(matrix_from_json(e));
  return out;
}

Json problem_to_json(const ProblemModel& m) {
  Json j;
  j["d"] = m.dim();
  j["noise_std"] = m.noise_std;
  j["L"] = m.L;
  j["mu"] = m.mu;
  j["kappa"] = m.kappa;
  j["sigma_min_wstar"] = m.sigma_min_wstar;
  j["w_star"] = matrix_to_json(m.w_star);
  j["sigma"] = matrix_to_json(m.sigma);
  return j;
}

ProblemModel problem_from_json(const Json& j) {
  ProblemModel m;
  m.w_star = matrix_from_json(j.at("w_star"));
  m.sigma = matrix_from_json(j.at("sigma"));
  if (m.w_star.dim() != m.sigma.dim()) throw ConfigError("problem: dimension mismatch");
  m.noise_std = j.at("noise_std").get<double>();
  m.L = j.at("L").get<double>();
  m.mu = j.at("mu").get<double>();
  m.kappa = j.at("kappa").get<double>();
  m.sigma_min_wstar = j.at("sigma_min_wstar").get<double>();
  return m;
}

Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["d"] = c.d;
  j["kappa"] = c.kappa;
  j["sigma_scale"] = c.sigma_scale;
  j["noise_std"] = c.noise_std;
  j["T"] = c.T;
  j["mode"] = to_string(c.mode);
  j["beta"] = c.beta ? Json(*c.beta) : Json("auto");
  j["inner_steps"] = c.inner_steps;
  j["batch_size"] = c.batch_size;
  j["n_train"] = c.n_train;
  j["n_test"] = c.n_test;
  j["certify"] = c.certify;
  j["warmup_C"] = c.warmup_C;
  j["on_singular"] = to_string(c.on_singular);
  j["output_dir"] = c.output_dir;
  j["learning_rate"] = c.learning_rate ? Json(*c.learning_rate) : Json("auto");
  j["random_scale"] = c.random_scale;
  j["start"] = to_string(c.start);
  j["start_fraction"] = c.start_fraction;
  j["timing"] = c.timing;
  return j;
}

std::optional<double> auto_or_number(const Json& v, const char* key) {
  if (v.is_string()) {
    if (v.get<std::string>() == "auto") return std::nullopt;
    throw ConfigError(std::string(key) + ": expected \"auto\" or a number");
  }
  return v.get<double>();
}

ExperimentConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  ExperimentConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "d") c.d = v.get<std::size_t>();
      else if (key == "kappa") c.kappa = v.get<double>();
      else if (key == "sigma_scale") c.sigma_scale = v.get<double>();
      else if (key == "noise_std") c.noise_std = v.get<double>();
      else if (key == "T") c.T = v.get<std::size_t>();
      else if (key == "mode") c.mode = parse_mode(v.get<std::string>());
      else if (key == "beta") c.beta = auto_or_number(v, "beta");
      else if (key == "inner_steps") c.inner_steps = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "n_train") c.n_train = v.get<std::size_t>();
      else if (key == "n_test") c.n_test = v.get<std::size_t>();
      else if (key == "certify") c.certify = v.get<bool>();
      else if (key == "warmup_C") c.warmup_C = v.get<double>();
      else if (key == "on_singular") c.on_singular = parse_singular_policy(v.get<std::string>());
      else if (key == "output_dir") c.output_dir = v.get<std::string>();
      else if (key == "learning_rate") c.learning_rate = auto_or_number(v, "learning_rate");
      else if (key == "random_scale") c.random_scale = v.get<double>();
      else if (key == "start") c.start = parse_start(v.get<std::string>());
      else if (key == "start_fraction") c.start_fraction = v.get<double>();
      else if (key == "timing") c.timing = v.get<bool>();
      else throw ConfigError("config: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  return c;
}

Json parse_json(std::string_view text, const char* what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

struct Clock {
  bool enabled;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  std::optional<std::int64_t> lap() {
    if (!enabled) return std::nullopt;
    const auto now = std::chrono::steady_clock::now();
    const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(now - start).count();
    start = now;
    return static_cast<std::int64_t>(ns);
  }
};

StageTrace expected_row(std::size_t stage, const Matrix& w, const ProblemModel& m) {
  StageTrace r;
  r.stage = stage;
  r.loss = expected_loss(w, m);
  r.suboptimality = excess_loss(w - m.w_star, m);
  return r;
}

void run_closed_form(const ExperimentConfig& cfg, const ProblemModel& m, const UpdateParams& p,
                     ExperimentResult& res) {
  Clock clock{cfg.timing};
  Matrix w = Matrix::identity(cfg.d);
  if (cfg.start == StartKind::near_optimum) {
    Rng start_rng(Rng::derive(cfg.seed, kStartStream));
    const LemmaContext ctx = LemmaContext::from_model(m);
    w = m.w_star + near_optimum_offset(m, ctx, cfg.start_fraction, start_rng);
  }
  res.products.push_back(w);
  res.traces.push_back(expected_row(0, w, m));

  if (cfg.start == StartKind::warmup) {
    res.warmup_stages = warmup_length(m, excess_loss(w - m.w_star, m), cfg.warmup_C);
    for (std::size_t t = 0; t < res.warmup_stages; ++t) {
      w = gd_step_closed(w, m);
      res.products.push_back(w);
      res.traces.push_back(expected_row(res.products.size() - 1, w, m));
      res.traces.back().wall_ns = clock.lap();
    }
  }

  Matrix w_prev = w;
  for (std::size_t t = 0; t < cfg.T; ++t) {
    const std::size_t stage = res.products.size();
    Matrix x = w;
    if (cfg.mode == Mode::nesterov) {
      x = nesterov_lookahead(w, w_prev, p.beta);
    } else if (cfg.mode == Mode::stacking) {
      try {
        x = stacking_lookahead(w, w_prev, p.beta);
      } catch (const SingularMatrix& e) {
        if (cfg.on_singular == SingularPolicy::abort) throw e.at_stage(stage);
        res.fallback_stages.push_back(stage);
        x = w;
      }
    }
    if (cfg.mode != Mode::gd) res.lookaheads.push_back(x);
    Matrix next = gd_step_closed(x, m);
    w_prev = std::exchange(w, std::move(next));
    res.products.push_back(w);
    res.traces.push_back(expected_row(stage, w, m));
    res.traces.back().wall_ns = clock.lap();
  }
  // Delta_T = 0: the last lookahead is the unperturbed one.
  if (cfg.mode != Mode::gd) res.lookaheads.push_back(nesterov_lookahead(w, w_prev, p.beta));
}

void run_last_layer(const ExperimentConfig& cfg, const ProblemModel& m, const UpdateParams& p,
                    ExperimentResult& res) {
  Clock clock{cfg.timing};
  Rng rng(Rng::derive(cfg.seed, kRunStream));
  const InitScheme scheme = cfg.mode == Mode::random ? InitScheme{RandomInit{cfg.random_scale}}
                                                     : InitScheme{ZeroInit{}};
  NetworkState s(cfg.d);
  res.products.push_back(s.product());
  res.traces.push_back(expected_row(0, s.product(), m));
  for (std::size_t t = 1; t <= cfg.T; ++t) {
    try {
      s = stage_last_layer(s, scheme, m, p, rng);
    } catch (const SingularMatrix& e) {
      // The back-solve for the new layer needs W_t^{-1} under every scheme.
      throw e.at_stage(t);
    }
    res.products.push_back(s.product());
    res.traces.push_back(expected_row(t, s.product(), m));
    res.traces.back().wall_ns = clock.lap();
  }
  res.layers = s.layers();
}

void run_all_layers(const ExperimentConfig& cfg, const ProblemModel& m, const UpdateParams& p,
                    ExperimentResult& res) {
  Clock clock{cfg.timing};
  Rng data_rng(Rng::derive(cfg.seed, kDataStream));
  const Dataset train = sample_dataset(m, cfg.n_train, data_rng);
  const Dataset test = sample_dataset(m, cfg.n_test, data_rng);
  Rng rng(Rng::derive(cfg.seed, kRunStream));
  BatchStream stream(train, cfg.batch_size, rng);
  const double lr = cfg.learning_rate.value_or(1.0 / (static_cast<double>(cfg.d) * m.L));

  auto row = [&](std::size_t stage, const Matrix& w) {
    StageTrace r;
    r.stage = stage;
    r.loss = empirical_loss(w, test);
    r.suboptimality = excess_loss(w - m.w_star, m);
    return r;
  };

  NetworkState s(cfg.d);
  res.products.push_back(s.product());
  res.traces.push_back(row(0, s.product()));
  for (std::size_t t = 1; t <= cfg.T; ++t) {
    InitScheme scheme = ZeroInit{};
    if (cfg.mode == Mode::random_all) {
      scheme = RandomInit{cfg.random_scale};
    } else if (s.depth() > 0) {
      if (cfg.mode == Mode::stacking_all) scheme = StackingInit{p.beta};
      else scheme = NesterovInit{p.beta};
    }
    try {
      s = stage_all_layers(s, scheme, cfg.inner_steps, lr, &stream, rng);
    } catch (const SingularMatrix& e) {
      if (cfg.on_singular == SingularPolicy::abort) throw e.at_stage(t);
      res.fallback_stages.push_back(t);
      s = stage_all_layers(s, ZeroInit{}, cfg.inner_steps, lr, &stream, rng);
    }
    res.products.push_back(s.product());
    res.traces.push_back(row(t, s.product()));
    res.traces.back().wall_ns = clock.lap();
  }
  res.layers = s.layers();
}

void attach_certificate(const ExperimentConfig& cfg, ExperimentResult& res) {
  if (!cfg.certify || res.lookaheads.empty() || !(res.model.kappa > 1.0)) return;
  const LemmaContext ctx = LemmaContext::from_model(res.model);
  const std::vector<Matrix> ys(res.products.begin() + static_cast<std::ptrdiff_t>(res.warmup_stages),
                               res.products.end());
  const PerturbedRun run = assemble_run(res.model, ctx, ys, res.lookaheads);
  for (const StepRecord& r : run.records) {
    StageTrace& row = res.traces[res.warmup_stages + r.t];
    row.delta_norm = r.delta_norm;
    row.alpha_budget = r.alpha_budget;
    row.phi = r.phi;
    row.lemma_bound = r.lemma_bound;
    row.eta = r.eta;
  }
  res.certificate = certify(run, ctx, certify_options_for(cfg));
}

}  // namespace

std::string_view to_string(Mode m) {
  for (const auto& [mode, name] : kModes)
    if (mode == m) return name;
  return "?";
}

std::string_view to_string(SingularPolicy p) {
  return p == SingularPolicy::abort ? "abort" : "fallback_gd";
}

std::string_view to_string(StartKind s) {
  switch (s) {
    case StartKind::identity: return "identity";
    case StartKind::near_optimum: return "near_optimum";
    case StartKind::warmup: return "warmup";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  for (const auto& [mode, name] : kModes)
    if (name == s) return mode;
  throw ConfigError("unknown mode '" + std::string(s) + "'");
}

SingularPolicy parse_singular_policy(std::string_view s) {
  if (s == "abort") return SingularPolicy::abort;
  if (s == "fallback_gd") return SingularPolicy::fallback_gd;
  throw ConfigError("on_singular must be abort or fallback_gd, got '" + std::string(s) + "'");
}

StartKind parse_start(std::string_view s) {
  if (s == "identity") return StartKind::identity;
  if (s == "near_optimum") return StartKind::near_optimum;
  if (s == "warmup") return StartKind::warmup;
  throw ConfigError("start must be identity, near_optimum or warmup, got '" + std::string(s) + "'");
}

bool is_closed_form(Mode m) { return m == Mode::gd || m == Mode::stacking || m == Mode::nesterov; }

bool is_all_layers(Mode m) {
  return m == Mode::stacking_all || m == Mode::nesterov_init_all || m == Mode::random_all;
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(d >= 1 && d <= 128, "d must lie in [1, 128]");
  require(std::isfinite(kappa) && kappa >= 1.0, "kappa must be >= 1");
  require(std::isfinite(sigma_scale) && sigma_scale >= 0.0, "sigma_scale must be >= 0");
  require(std::isfinite(noise_std) && noise_std >= 0.0, "noise_std must be >= 0");
  require(T >= 1, "T must be >= 1");
  require(!beta || (*beta >= 0.0 && *beta < 1.0), "beta must lie in [0, 1)");
  require(inner_steps >= 1, "inner_steps must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(n_train >= 1 && n_test >= 1, "n_train and n_test must be >= 1");
  require(warmup_C > 0.0, "warmup_C must be positive");
  require(!learning_rate || *learning_rate > 0.0, "learning_rate must be positive");
  require(std::isfinite(random_scale) && random_scale >= 0.0, "random_scale must be >= 0");
  require(start_fraction > 0.0 && start_fraction <= 1.0, "start_fraction must lie in (0, 1]");
  require(start == StartKind::identity || is_closed_form(mode),
          "start other than identity needs mode gd, stacking or nesterov");
  require(start != StartKind::near_optimum || kappa > 9.0,
          "start near_optimum needs kappa > 9 (the stacking radius is undefined otherwise)");
}

std::string ExperimentConfig::to_json() const { return config_to_json(*this).dump(2) + "\n"; }

ExperimentConfig ExperimentConfig::from_json(std::string_view text) {
  return config_from_json(parse_json(text, "config"));
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  try {
    return from_json(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

CertifyOptions certify_options_for(const ExperimentConfig& cfg) {
  CertifyOptions o;
  o.theorem_checks = cfg.start == StartKind::near_optimum && cfg.kappa > 9.0;
  return o;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  Rng problem_rng(Rng::derive(cfg.seed, kProblemStream));
  ExperimentResult res;
  res.config = cfg;
  res.model = make_problem(cfg.d, cfg.kappa, cfg.sigma_scale, cfg.noise_std, problem_rng);
  const UpdateParams p = UpdateParams::defaults_for(res.model, cfg.beta);

  if (is_closed_form(cfg.mode)) run_closed_form(cfg, res.model, p, res);
  else if (is_all_layers(cfg.mode)) run_all_layers(cfg, res.model, p, res);
  else run_last_layer(cfg, res.model, p, res);

  attach_certificate(cfg, res);
  return res;
}

std::size_t SweepReport::failures() const {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](const SweepCell& c) { return !c.error.empty(); }));
}

SweepReport run_sweep(const ExperimentConfig& base, const std::vector<double>& kappas,
                      const std::vector<Mode>& modes, const std::vector<std::uint64_t>& seeds,
                      std::size_t threads) {
  if (kappas.empty() || modes.empty() || seeds.empty()) {
    throw ConfigError("sweep: kappas, modes and seeds must be nonempty");
  }
  SweepReport report;
  for (double k : kappas)
    for (Mode m : modes)
      for (std::uint64_t s : seeds) report.cells.push_back(SweepCell{k, m, s, {}, std::nullopt, {}});

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < report.cells.size(); i = next++) {
      SweepCell& cell = report.cells[i];
      ExperimentConfig cfg = base;
      cfg.kappa = cell.kappa;
      cfg.mode = cell.mode;
      cfg.seed = cell.seed;
      try {
        ExperimentResult r = run_experiment(cfg);
        cell.traces = std::move(r.traces);
        cell.certificate = std::move(r.certificate);
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, report.cells.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  return report;
}

std::string format_sweep_csv(const SweepReport& report) {
  std::string out = "kappa,mode,seed,";
  out += kTraceHeader;
  out += '\n';
  for (const SweepCell& c : report.cells) {
    const std::string prefix =
        format_number(c.kappa) + "," + std::string(to_string(c.mode)) + "," + std::to_string(c.seed) + ",";
    for (const StageTrace& r : c.traces) {
      out += prefix;
      out += format_trace_row(r);
      out += '\n';
    }
  }
  return out;
}

std::vector<PlotSeries> sweep_series(const SweepReport& report) {
  std::vector<PlotSeries> out;
  std::map<std::pair<double, int>, std::size_t> index;
  std::vector<std::size_t> counts;
  for (const SweepCell& c : report.cells) {
    if (!c.error.empty() || c.traces.empty()) continue;
    const auto key = std::make_pair(c.kappa, static_cast<int>(c.mode));
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      PlotSeries s;
      s.label = std::string(to_string(c.mode)) + " kappa=" + format_number(c.kappa);
      s.traces = c.traces;
      for (StageTrace& r : s.traces) {
        StageTrace plain;
        plain.stage = r.stage;
        plain.loss = r.loss;
        plain.suboptimality = r.suboptimality;
        r = plain;
      }
      out.push_back(std::move(s));
      counts.push_back(1);
      continue;
    }
    PlotSeries& s = out[it->second];
    const std::size_t n = std::min(s.traces.size(), c.traces.size());
    s.traces.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      s.traces[i].loss += c.traces[i].loss;
      s.traces[i].suboptimality += c.traces[i].suboptimality;
    }
    ++counts[it->second];
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double n = static_cast<double>(counts[i]);
    for (StageTrace& r : out[i].traces) {
      r.loss /= n;
      r.suboptimality /= n;
    }
  }
  return out;
}

std::string snapshot_json(const ExperimentResult& r) {
  Json j;
  j["config"] = config_to_json(r.config);
  j["problem"] = problem_to_json(r.model);
  j["warmup_stages"] = r.warmup_stages;
  j["fallback_stages"] = r.fallback_stages;
  j["products"] = matrices_to_json(r.products);
  j["lookaheads"] = matrices_to_json(r.lookaheads);
  j["layers"] = matrices_to_json(r.layers);
  return j.dump() + "\n";
}

Snapshot parse_snapshot(std::string_view text) {
  const Json j = parse_json(text, "snapshot");
  try {
    Snapshot s;
    s.config = config_from_json(j.at("config"));
    s.model = problem_from_json(j.at("problem"));
    s.warmup_stages = j.at("warmup_stages").get<std::size_t>();
    s.products = matrices_from_json(j.at("products"));
    s.lookaheads = matrices_from_json(j.at("lookaheads"));
    s.layers = matrices_from_json(j.at("layers"));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("snapshot: ") + e.what());
  }
}

std::string problem_json(const ProblemModel& m) { return problem_to_json(m).dump() + "\n"; }

ProblemModel parse_problem(std::string_view text) {
  try {
    return problem_from_json(parse_json(text, "problem"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("problem: ") + e.what());
  }
}

PerturbedRun reassemble(const Snapshot& snap, const LemmaContext& ctx) {
  if (snap.lookaheads.empty()) {
    throw ConfigError("snapshot has no lookahead iterates (mode " +
                      std::string(to_string(snap.config.mode)) + ")");
  }
  if (snap.warmup_stages + snap.lookaheads.size() != snap.products.size()) {
    throw ConfigError("snapshot: products and lookaheads do not line up");
  }
  const std::vector<Matrix> ys(snap.products.begin() + static_cast<std::ptrdiff_t>(snap.warmup_stages),
                               snap.products.end());
  return assemble_run(snap.model, ctx, ys, snap.lookaheads);
}

}  // namespace stacklab
