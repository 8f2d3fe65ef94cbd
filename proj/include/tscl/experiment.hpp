#pragma once

// Config-driven runner: single runs, V sweeps, (V, V-tilde) grids and
// integral checks. Jobs run on a bounded worker pool; every output file is
// written afterwards by one thread in (V, V-tilde, seed) order so results do
// not depend on the number of workers.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <boost/random/uniform_real_distribution.hpp>
#include <json.hpp>

#include "tscl/csv.hpp"
#include "tscl/gaussian_integrals.hpp"
#include "tscl/metrics.hpp"
#include "tscl/ode.hpp"
#include "tscl/plot.hpp"
#include "tscl/task_gen.hpp"
#include "tscl/training.hpp"

namespace tscl {

inline constexpr const char* kVersion = "tscl 1.0.0";

enum class Mode { OdeRun, SimRun, SweepV, Sweep2D, IntegralsCheck };
enum class Backend { Ode, Sim };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::OdeRun: return "ode_run";
    case Mode::SimRun: return "sim_run";
    case Mode::SweepV: return "sweep_v";
    case Mode::Sweep2D: return "sweep_2d";
    case Mode::IntegralsCheck: return "integrals_check";
  }
  return "?";
}

inline Mode mode_from_string(std::string_view s) {
  for (Mode m : {Mode::OdeRun, Mode::SimRun, Mode::SweepV, Mode::Sweep2D, Mode::IntegralsCheck})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "'");
}

struct IntegralCheckConfig {
  int covariances = 200;
  long long samples = 1000000;
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  Mode mode = Mode::OdeRun;
  Backend engine = Backend::Ode;
  Regime regime = Regime::OdeLimit;
  Activation activation = Activation::ErfScaled;
  int input_dim = 10000;  // D
  int student_hidden = 2;  // K
  int teacher_hidden = 1;  // M = P
  TrainingSchedule schedule;
  double ode_dt = 0.01;
  OdeMethod ode_method = OdeMethod::Rk4;
  std::vector<double> v_grid{1.0};
  std::vector<double> vtilde_grid;  // empty: no readout similarity
  std::vector<std::uint64_t> seeds{1};
  std::vector<long long> cross_section_t{10, 100, 1000, 10000};
  int initial_rate_n = 20;
  std::vector<long long> feature_mse_t;  // post-switch offsets, simulation only
  bool record_overlaps = false;          // order-parameter CSV per run
  bool plots = true;
  IntegralCheckConfig integrals;
  std::string output_dir = "out";

  void validate() const {
    if (mode == Mode::IntegralsCheck) {
      if (integrals.covariances <= 0) throw std::invalid_argument("config: integrals.covariances must be positive");
      if (integrals.samples < 10000) throw std::invalid_argument("config: integrals.samples must be >= 1e4");
      return;
    }
    if (v_grid.empty()) throw std::invalid_argument("config: V grid is empty");
    if (seeds.empty()) throw std::invalid_argument("config: seeds are empty");
    if (input_dim <= 0 || student_hidden <= 0 || teacher_hidden <= 0)
      throw std::invalid_argument("config: dims must be positive");
    for (double v : v_grid)
      if (v < 0.0 || v > 1.0) throw std::invalid_argument("config: V values must lie in [0, 1]");
    for (double v : vtilde_grid)
      if (v < -1.0 || v > 1.0) throw std::invalid_argument("config: Vtilde values must lie in [-1, 1]");
    if (regime == Regime::MeanField && vtilde_grid.empty())
      throw std::invalid_argument("config: mean-field runs need a Vtilde grid");
    if (regime == Regime::OdeLimit && !vtilde_grid.empty())
      throw std::invalid_argument("config: Vtilde is only defined in the mean-field regime");
    if (mode == Mode::Sweep2D && regime != Regime::MeanField)
      throw std::invalid_argument("config: sweep_2d requires the mean-field regime");
    if (engine == Backend::Ode) {
      if (regime != Regime::OdeLimit) throw std::invalid_argument("config: the ODE engine needs the ode_limit regime");
      if (activation == Activation::Relu) throw std::invalid_argument("config: the ODE engine does not support relu");
    }
    schedule.validate();
    const long long phase2 = schedule.total_steps - schedule.switch_step;
    for (long long t : cross_section_t)
      if (t < 0 || t > phase2)
        throw std::invalid_argument("config: cross-section t=" + std::to_string(t) + " exceeds phase-2 length " +
                                    std::to_string(phase2));
    for (long long t : feature_mse_t)
      if (t < 0 || t > phase2)
        throw std::invalid_argument("config: feature_mse t=" + std::to_string(t) + " exceeds phase-2 length");
    if (initial_rate_n < 1 || initial_rate_n > phase2)
      throw std::invalid_argument("config: initial_rate_n out of range");
  }
};

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw std::invalid_argument(std::string("config: unknown key '") + it.key() + "' in " + where);
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"mode", "engine", "regime", "activation", "dims", "schedule", "V", "Vtilde", "seeds",
                      "metrics", "record_overlaps", "plots", "integrals", "output_dir"},
                     "top level");
  ExperimentConfig c;
  c.mode = mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("regime")) {
    const auto r = j.at("regime").get<std::string>();
    if (r == "ode_limit") c.regime = Regime::OdeLimit;
    else if (r == "mean_field") c.regime = Regime::MeanField;
    else throw std::invalid_argument("config: unknown regime '" + r + "'");
  }
  if (j.contains("activation")) c.activation = activation_from_string(j.at("activation").get<std::string>());

  switch (c.mode) {
    case Mode::OdeRun: c.engine = Backend::Ode; break;
    case Mode::SimRun:
    case Mode::Sweep2D: c.engine = Backend::Sim; break;
    default:
      c.engine = c.regime == Regime::OdeLimit && c.activation != Activation::Relu ? Backend::Ode : Backend::Sim;
  }
  if (j.contains("engine")) {
    const auto e = j.at("engine").get<std::string>();
    if (e == "ode") c.engine = Backend::Ode;
    else if (e == "sim") c.engine = Backend::Sim;
    else throw std::invalid_argument("config: unknown engine '" + e + "'");
    if ((c.mode == Mode::OdeRun && c.engine != Backend::Ode) || (c.mode == Mode::SimRun && c.engine != Backend::Sim))
      throw std::invalid_argument("config: engine contradicts mode");
  }

  if (j.contains("dims")) {
    const auto& d = j.at("dims");
    detail::check_keys(d, {"D", "K", "M"}, "dims");
    detail::read_opt(d, "D", c.input_dim);
    detail::read_opt(d, "K", c.student_hidden);
    detail::read_opt(d, "M", c.teacher_hidden);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    detail::check_keys(s,
                       {"switch_step", "total_steps", "lr_w", "lr_h", "lr", "test_set_size", "log_every",
                        "student_init_std", "dense_after_switch", "ode_dt", "ode_method"},
                       "schedule");
    auto& t = c.schedule;
    detail::read_opt(s, "switch_step", t.switch_step);
    detail::read_opt(s, "total_steps", t.total_steps);
    if (s.contains("lr")) t.lr_w = t.lr_h = s.at("lr").get<double>();
    detail::read_opt(s, "lr_w", t.lr_w);
    detail::read_opt(s, "lr_h", t.lr_h);
    detail::read_opt(s, "test_set_size", t.test_set_size);
    detail::read_opt(s, "log_every", t.log_every);
    detail::read_opt(s, "student_init_std", t.student_init_std);
    detail::read_opt(s, "dense_after_switch", t.dense_after_switch);
    detail::read_opt(s, "ode_dt", c.ode_dt);
    if (s.contains("ode_method")) {
      const auto m = s.at("ode_method").get<std::string>();
      if (m == "rk4") c.ode_method = OdeMethod::Rk4;
      else if (m == "euler") c.ode_method = OdeMethod::Euler;
      else throw std::invalid_argument("config: unknown ode_method '" + m + "'");
    }
  }
  detail::read_opt(j, "V", c.v_grid);
  detail::read_opt(j, "Vtilde", c.vtilde_grid);
  detail::read_opt(j, "seeds", c.seeds);
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    detail::check_keys(m, {"cross_section_t", "initial_rate_n", "feature_mse_t"}, "metrics");
    detail::read_opt(m, "cross_section_t", c.cross_section_t);
    detail::read_opt(m, "initial_rate_n", c.initial_rate_n);
    detail::read_opt(m, "feature_mse_t", c.feature_mse_t);
  }
  detail::read_opt(j, "record_overlaps", c.record_overlaps);
  detail::read_opt(j, "plots", c.plots);
  if (j.contains("integrals")) {
    const auto& i = j.at("integrals");
    detail::check_keys(i, {"covariances", "samples", "seed"}, "integrals");
    detail::read_opt(i, "covariances", c.integrals.covariances);
    detail::read_opt(i, "samples", c.integrals.samples);
    detail::read_opt(i, "seed", c.integrals.seed);
  }
  detail::read_opt(j, "output_dir", c.output_dir);
  c.validate();
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  const auto& s = c.schedule;
  nlohmann::json j{
      {"mode", to_string(c.mode)},
      {"engine", c.engine == Backend::Ode ? "ode" : "sim"},
      {"regime", to_string(c.regime)},
      {"activation", to_string(c.activation)},
      {"dims", {{"D", c.input_dim}, {"K", c.student_hidden}, {"M", c.teacher_hidden}}},
      {"schedule",
       {{"switch_step", s.switch_step},
        {"total_steps", s.total_steps},
        {"lr_w", s.lr_w},
        {"lr_h", s.lr_h},
        {"test_set_size", s.test_set_size},
        {"log_every", s.log_every},
        {"student_init_std", s.student_init_std},
        {"dense_after_switch", s.dense_after_switch},
        {"ode_dt", c.ode_dt},
        {"ode_method", c.ode_method == OdeMethod::Rk4 ? "rk4" : "euler"}}},
      {"V", c.v_grid},
      {"Vtilde", c.vtilde_grid},
      {"seeds", c.seeds},
      {"metrics",
       {{"cross_section_t", c.cross_section_t},
        {"initial_rate_n", c.initial_rate_n},
        {"feature_mse_t", c.feature_mse_t}}},
      {"record_overlaps", c.record_overlaps},
      {"plots", c.plots},
      {"integrals",
       {{"covariances", c.integrals.covariances}, {"samples", c.integrals.samples}, {"seed", c.integrals.seed}}},
      {"output_dir", c.output_dir}};
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

struct RunStatus {
  double v = 0.0;
  std::optional<double> vtilde;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string message;
};

struct RunManifest {
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> files;
  std::string version = kVersion;
  double wall_clock_seconds = 0.0;
  std::vector<RunStatus> runs;
  int integral_checks = 0;
  int integral_failures = 0;

  bool ok() const {
    if (integral_failures > 0) return false;
    for (const auto& r : runs)
      if (!r.ok) return false;
    return true;
  }
};

inline nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : m.runs)
    runs.push_back({{"V", r.v},
                    {"Vtilde", r.vtilde ? nlohmann::json(*r.vtilde) : nlohmann::json(nullptr)},
                    {"seed", r.seed},
                    {"status", r.ok ? "ok" : "failed"},
                    {"message", r.message}});
  return {{"config_hash", m.config_hash},
          {"seeds", m.seeds},
          {"files", m.files},
          {"version", m.version},
          {"wall_clock_seconds", m.wall_clock_seconds},
          {"runs", runs},
          {"integral_checks", m.integral_checks},
          {"integral_failures", m.integral_failures},
          {"ok", m.ok()}};
}

/// One row of the metrics table.
struct MetricRow {
  std::string metric;
  long long t = 0;
  double value = 0.0;
};

struct RunResult {
  RunStatus status;
  std::vector<double> x;  // step (simulation) or tau (ODE)
  std::vector<double> eps_dag, eps_ddag;
  std::vector<OverlapState> overlaps;
  std::vector<MetricRow> metrics;
  nlohmann::json teachers;
};

struct IntegralCheckRow {
  IntegralKind kind = IntegralKind::I2;
  std::string c_hash;
  double analytic = 0.0;
  double mc = 0.0;
  double se = 0.0;
  bool pass = false;
};

namespace detail {

inline std::string fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string label(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const int w = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (w == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (int k = 0; k < w; ++k)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
}

struct Job {
  double v = 0.0;
  std::optional<double> vtilde;
  std::uint64_t seed = 0;
};

inline std::vector<Job> jobs_for(const ExperimentConfig& c) {
  std::vector<double> v = c.v_grid;
  std::vector<std::optional<double>> vt;
  for (double x : c.vtilde_grid) vt.emplace_back(x);
  if (vt.empty()) vt.emplace_back(std::nullopt);
  std::vector<std::uint64_t> seeds = c.seeds;
  std::sort(v.begin(), v.end());
  std::sort(seeds.begin(), seeds.end());
  std::vector<Job> jobs;
  for (double a : v)
    for (const auto& b : vt)
      for (auto s : seeds) jobs.push_back({a, b, s});
  return jobs;
}

inline SimilaritySpec spec_for(const ExperimentConfig& c, const Job& job) {
  SimilaritySpec s;
  s.feature_overlap = job.v;
  s.readout_overlap = job.vtilde;
  s.regime = c.regime;
  s.input_dim = c.input_dim;
  s.dagger_hidden = c.teacher_hidden;
  s.ddagger_hidden = c.teacher_hidden;
  s.activation = c.activation;
  s.seed = job.seed;
  return s;
}

inline std::vector<MetricRow> trace_metrics(const ExperimentConfig& c, const SwitchAnchoredTrace& tr) {
  std::vector<MetricRow> rows;
  for (long long t : c.cross_section_t) rows.push_back({"forgetting", t, forgetting_at(tr, t)});
  for (long long t : c.cross_section_t) rows.push_back({"transfer", t, transfer_at(tr, t)});
  const long long n = c.initial_rate_n, end = tr.phase2_length();
  rows.push_back({"initial_rate_forgetting", n, initial_rate(tr, Measure::Forgetting, static_cast<int>(n))});
  rows.push_back({"initial_rate_transfer", n, initial_rate(tr, Measure::Transfer, static_cast<int>(n))});
  rows.push_back({"max_forgetting", end, max_forgetting(tr)});
  rows.push_back({"max_transfer", end, max_transfer(tr)});
  rows.push_back({"long_time_forgetting", end, long_time(tr, Measure::Forgetting)});
  rows.push_back({"long_time_forgetting_adjusted", tr.steps()[adjusted_end_index(tr)] - tr.switch_step(),
                  long_time(tr, Measure::Forgetting, true)});
  rows.push_back({"long_time_transfer", end, long_time(tr, Measure::Transfer)});
  return rows;
}

inline RunResult run_ode(const ExperimentConfig& c, const Job& job) {
  RunResult r;
  const auto spec = spec_for(c, job);
  const TeacherPair tp = make_teachers(spec);
  r.teachers = spec;
  const TwoLayerNet student = make_student(c.student_hidden, c.input_dim, c.activation, Scaling::LargeInput,
                                           c.schedule.student_init_std, job.seed);
  const OverlapState s0 = overlaps_from_weights(student, tp.dagger, tp.ddagger);

  // Every recorded time is an integer step divided by D, so the mapping
  // back to steps is exact.
  const double d = c.input_dim;
  const auto& s = c.schedule;
  OdeSchedule os;
  os.switch_time = static_cast<double>(s.switch_step) / d;
  os.end_time = static_cast<double>(s.total_steps) / d;
  os.dt = c.ode_dt;
  os.lr_w = s.lr_w;
  os.lr_h = s.lr_h;
  os.method = c.ode_method;
  os.log_every = os.end_time;
  TrainingSchedule grid = s;
  grid.dense_after_switch = std::max(s.dense_after_switch, c.initial_rate_n);
  for (long long t : c.cross_section_t) grid.extra_log_steps.push_back(s.switch_step + t);
  for (long long k : log_steps(grid)) os.extra_log_times.push_back(static_cast<double>(k) / d);

  const OdeTrajectory traj = integrate(s0, os, c.activation);
  r.x = traj.times;
  r.eps_dag = traj.eps_dag;
  r.eps_ddag = traj.eps_ddag;
  if (c.record_overlaps) r.overlaps = traj.states;
  r.metrics = trace_metrics(c, SwitchAnchoredTrace::from_ode(traj, os.switch_time, c.input_dim));
  return r;
}

inline RunResult run_sim(const ExperimentConfig& c, const Job& job) {
  RunResult r;
  const auto spec = spec_for(c, job);
  const TeacherPair tp = make_teachers(spec);
  r.teachers = spec;
  const Scaling scaling = c.regime == Regime::OdeLimit ? Scaling::LargeInput : Scaling::MeanField;
  TwoLayerNet student = make_student(c.student_hidden, c.input_dim, c.activation, scaling,
                                     c.schedule.student_init_std, job.seed);
  TrainingSchedule s = c.schedule;
  s.seed = job.seed;
  s.dense_after_switch = std::max(s.dense_after_switch, c.initial_rate_n);
  s.record_overlaps = c.record_overlaps && scaling == Scaling::LargeInput;
  for (long long t : c.cross_section_t) s.extra_log_steps.push_back(s.switch_step + t);
  if (!c.feature_mse_t.empty()) {
    s.snapshot_steps.push_back(s.switch_step);
    for (long long t : c.feature_mse_t) s.snapshot_steps.push_back(s.switch_step + t);
  }
  const ErrorTrace tr = train(student, tp.dagger, tp.ddagger, s);
  r.x.assign(tr.steps.begin(), tr.steps.end());
  r.eps_dag = tr.eps_dag;
  r.eps_ddag = tr.eps_ddag;
  r.overlaps = tr.overlaps;
  r.metrics = trace_metrics(c, SwitchAnchoredTrace(tr, s.switch_step));
  const RowMatrix& ref = tr.snapshots.empty() ? RowMatrix() : tr.snapshots.at(s.switch_step);
  for (long long t : c.feature_mse_t) r.metrics.push_back({"feature_mse", t, feature_mse(tr.snapshots.at(s.switch_step + t), ref)});
  return r;
}

inline Eigen::MatrixXd random_covariance(int dim, std::uint64_t seed) {
  NormalSampler normal(make_engine(seed, Stream::MonteCarlo));
  Eigen::MatrixXd b(dim, dim + 2);
  normal.fill(b);
  Eigen::MatrixXd gram = b * b.transpose();
  const Eigen::VectorXd s = gram.diagonal().cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd corr = s.asDiagonal() * gram * s.asDiagonal();
  boost::random::uniform_real_distribution<double> u(0.5, 2.0);
  Eigen::VectorXd sd(dim);
  for (int i = 0; i < dim; ++i) sd[i] = std::sqrt(u(normal.engine()));
  return sd.asDiagonal() * corr * sd.asDiagonal();
}

inline std::string covariance_hash(const Eigen::MatrixXd& m) {
  std::string s;
  for (Eigen::Index i = 0; i < m.size(); ++i) s += csv::format(m.data()[i]) + ";";
  return fnv1a(s);
}

}  // namespace detail

/// Integral check table: each random 4x4 covariance is checked with its
/// leading 2x2, 3x3 and full block for I2, I3 and I4.
inline std::vector<IntegralCheckRow> integral_checks(const IntegralCheckConfig& cfg, int workers) {
  std::vector<IntegralCheckRow> rows(static_cast<std::size_t>(cfg.covariances) * 3);
  detail::parallel_for(rows.size(), workers, [&](std::size_t i) {
    const std::size_t cov = i / 3;
    const int dim = static_cast<int>(i % 3) + 2;
    const Eigen::MatrixXd full = detail::random_covariance(4, derive_seed(cfg.seed, cov));
    const Eigen::MatrixXd m = full.topLeftCorner(dim, dim);
    const auto c = ProjectedCovariance::from_matrix(m);
    const auto kind = static_cast<IntegralKind>(dim);
    const McEstimate mc = mc_expectation(c, kind, cfg.samples, derive_seed(cfg.seed + 1, i));
    IntegralCheckRow& r = rows[i];
    r.kind = kind;
    r.c_hash = detail::covariance_hash(m);
    r.analytic = evaluate(kind, c);
    r.mc = mc.estimate;
    r.se = mc.std_error;
    r.pass = std::abs(r.analytic - r.mc) <= 4.0 * r.se;
  });
  return rows;
}

/// Runs every (V, V-tilde, seed) job of a sweep config and returns the
/// results in (V, V-tilde, seed) order. Failed runs carry their message.
inline std::vector<RunResult> run_jobs(const ExperimentConfig& config, int workers = 1) {
  config.validate();
  const auto jobs = detail::jobs_for(config);
  std::vector<RunResult> results(jobs.size());
  detail::parallel_for(jobs.size(), workers, [&](std::size_t i) {
    const auto& job = jobs[i];
    RunResult& r = results[i];
    try {
      r = config.engine == Backend::Ode ? detail::run_ode(config, job) : detail::run_sim(config, job);
    } catch (const std::exception& e) {
      r = RunResult{};
      r.status.ok = false;
      r.status.message = e.what();
    }
    r.status.v = job.v;
    r.status.vtilde = job.vtilde;
    r.status.seed = job.seed;
  });
  return results;
}

/// Executes the experiment and writes every artifact under output_dir,
/// manifest.json last.
inline RunManifest run(const ExperimentConfig& config, int workers = 1) {
  namespace fs = std::filesystem;
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const fs::path out(config.output_dir);
  fs::create_directories(out);

  RunManifest man;
  nlohmann::json cj = to_json(config);
  cj.erase("output_dir");
  man.config_hash = detail::fnv1a(cj.dump());
  man.seeds = config.seeds;
  std::sort(man.seeds.begin(), man.seeds.end());

  auto rel = [&](const fs::path& p) { return fs::relative(p, out).generic_string(); };
  auto emit = [&](const fs::path& csv_path, plot::Kind kind, const plot::Options& opt) {
    if (!config.plots) return;
    fs::path svg = csv_path;
    svg.replace_extension(".svg");
    plot::emit_plot(csv_path.string(), kind, svg.string(), opt);
    man.files.push_back(rel(svg));
  };

  {
    std::ofstream cfg_out(out / "config.json");
    cfg_out << cj.dump(2) << '\n';
    man.files.push_back("config.json");
  }

  if (config.mode == Mode::IntegralsCheck) {
    const auto rows = integral_checks(config.integrals, workers);
    const fs::path p = out / "integrals_check.csv";
    csv::Writer w(p.string(), {"kind", "c_hash", "analytic", "mc", "se", "pass"});
    for (const auto& r : rows) {
      w.row({std::string("I") + std::to_string(static_cast<int>(r.kind)), r.c_hash, r.analytic, r.mc, r.se,
             static_cast<long long>(r.pass)});
      ++man.integral_checks;
      man.integral_failures += r.pass ? 0 : 1;
    }
    man.files.push_back(rel(p));
  } else {
    const std::vector<RunResult> results = run_jobs(config, workers);

    fs::create_directories(out / "traces");
    const bool ode = config.engine == Backend::Ode;
    const bool single = config.mode == Mode::OdeRun || config.mode == Mode::SimRun;
    nlohmann::json teachers = nlohmann::json::array();
    for (const auto& r : results) {
      man.runs.push_back(r.status);
      if (!r.status.ok) continue;
      teachers.push_back(r.teachers);
      std::string stem = "V" + detail::label(r.status.v);
      if (r.status.vtilde) stem += "_Vt" + detail::label(*r.status.vtilde);
      stem += "_seed" + std::to_string(r.status.seed);
      const fs::path p = out / "traces" / (stem + ".csv");
      {
        csv::Writer w(p.string(), {ode ? "tau" : "step", "eps_dag", "eps_ddag"});
        for (std::size_t i = 0; i < r.x.size(); ++i) {
          if (ode)
            w.row({r.x[i], r.eps_dag[i], r.eps_ddag[i]});
          else
            w.row({static_cast<long long>(r.x[i]), r.eps_dag[i], r.eps_ddag[i]});
        }
      }
      man.files.push_back(rel(p));
      if (single) emit(p, plot::Kind::Lines, {true, "generalisation error " + stem, ode ? "tau" : "step", "eps"});
      if (!r.overlaps.empty()) {
        const fs::path q = out / "traces" / (stem + "_overlaps.csv");
        const OverlapState& s0 = r.overlaps.front();
        std::vector<std::string> head{ode ? "tau" : "step"};
        auto add = [&](const std::string& name, const Eigen::MatrixXd& m) {
          for (Eigen::Index a = 0; a < m.rows(); ++a)
            for (Eigen::Index b = 0; b < m.cols(); ++b) head.push_back(name + std::to_string(a) + std::to_string(b));
        };
        auto addv = [&](const std::string& name, const Eigen::VectorXd& v) {
          for (Eigen::Index a = 0; a < v.size(); ++a) head.push_back(name + std::to_string(a));
        };
        add("Q", s0.Q), add("R", s0.R), add("U", s0.U), add("T", s0.T), add("S", s0.S), add("V", s0.V);
        addv("h_dag", s0.h_dag), addv("h_ddag", s0.h_ddag), addv("v_dag", s0.v_dag), addv("v_ddag", s0.v_ddag);
        csv::Writer w(q.string(), head);
        for (std::size_t i = 0; i < r.overlaps.size(); ++i) {
          const OverlapState& s = r.overlaps[i];
          std::vector<csv::Cell> row;
          if (ode)
            row.push_back(r.x[i]);
          else
            row.push_back(static_cast<long long>(r.x[i]));
          for (const Eigen::MatrixXd* m : {&s.Q, &s.R, &s.U, &s.T, &s.S, &s.V})
            for (Eigen::Index a = 0; a < m->rows(); ++a)
              for (Eigen::Index b = 0; b < m->cols(); ++b) row.push_back((*m)(a, b));
          for (const Eigen::VectorXd* v : {&s.h_dag, &s.h_ddag, &s.v_dag, &s.v_ddag})
            for (Eigen::Index a = 0; a < v->size(); ++a) row.push_back((*v)[a]);
          w.row(row);
        }
        man.files.push_back(rel(q));
      }
    }
    {
      std::ofstream t(out / "teachers.json");
      t << teachers.dump(2) << '\n';
      man.files.push_back("teachers.json");
    }

    const fs::path mp = out / "metrics.csv";
    {
      csv::Writer w(mp.string(), {"V", "Vtilde", "seed", "metric", "t", "value"});
      for (const auto& r : results) {
        if (!r.status.ok) continue;
        for (const auto& m : r.metrics)
          w.row({r.status.v, r.status.vtilde ? csv::Cell(*r.status.vtilde) : csv::Cell(std::string()),
                 static_cast<long long>(r.status.seed), m.metric, m.t, m.value});
      }
    }
    man.files.push_back(rel(mp));

    // Seed means keyed by (metric, t, V, Vtilde); missing runs are skipped.
    using Key = std::tuple<std::string, long long, double, double>;
    std::map<Key, std::pair<double, int>> mean;
    for (const auto& r : results) {
      if (!r.status.ok) continue;
      for (const auto& m : r.metrics) {
        // whole-trace metrics are keyed on t = -1
        const bool per_run_t = m.metric.rfind("long_time", 0) == 0 || m.metric.rfind("max_", 0) == 0 ||
                               m.metric.rfind("initial_rate", 0) == 0;
        auto& acc = mean[{m.metric, per_run_t ? -1 : m.t, r.status.v, r.status.vtilde.value_or(0.0)}];
        acc.first += m.value;
        acc.second += 1;
      }
    }

    if (config.mode == Mode::SweepV) {
      fs::create_directories(out / "cross_sections");
      std::vector<std::pair<std::string, long long>> sections;
      for (long long t : config.cross_section_t) {
        sections.emplace_back("forgetting", t);
        sections.emplace_back("transfer", t);
      }
      for (const char* m : {"max_forgetting", "max_transfer", "long_time_forgetting", "long_time_forgetting_adjusted",
                            "long_time_transfer"})
        sections.emplace_back(m, -1);
      for (const auto& [metric, t] : sections) {
        const std::string name = t >= 0 ? metric + "_t" + std::to_string(t) : metric;
        const fs::path p = out / "cross_sections" / (name + ".csv");
        int rows = 0;
        {
          csv::Writer w(p.string(), {"V", name});
          for (const auto& [key, acc] : mean)
            if (std::get<0>(key) == metric && std::get<1>(key) == t) {
              w.row({std::get<2>(key), acc.first / acc.second});
              ++rows;
            }
        }
        man.files.push_back(rel(p));
        if (rows) emit(p, plot::Kind::Lines, {false, name + " vs V", "V", name});
      }
    }

    if (config.mode == Mode::Sweep2D) {
      fs::create_directories(out / "heatmaps");
      std::vector<double> vs = config.v_grid, vts = config.vtilde_grid;
      std::sort(vs.begin(), vs.end());
      std::sort(vts.begin(), vts.end(), std::greater<>());
      for (const char* metric : {"initial_rate_forgetting", "initial_rate_transfer", "long_time_forgetting_adjusted",
                                 "long_time_forgetting", "long_time_transfer", "max_forgetting", "max_transfer"}) {
        const fs::path p = out / "heatmaps" / (std::string(metric) + ".csv");
        int cells = 0;
        {
          std::vector<std::string> head{"Vtilde\\V"};
          for (double v : vs) head.push_back(csv::format(v));
          csv::Writer w(p.string(), head);
          for (double vt : vts) {
            std::vector<csv::Cell> row{vt};
            for (double v : vs) {
              auto it = mean.find({metric, -1, v, vt});
              cells += it != mean.end();
              row.push_back(it == mean.end() ? std::numeric_limits<double>::quiet_NaN()
                                             : it->second.first / it->second.second);
            }
            w.row(row);
          }
        }
        man.files.push_back(rel(p));
        if (cells) emit(p, plot::Kind::Heatmap, {false, metric, "V", "Vtilde"});
      }
    }
  }

  man.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  man.files.push_back("manifest.json");
  std::ofstream mf(out / "manifest.json");
  mf << to_json(man).dump(2) << '\n';
  return man;
}

}  // namespace tscl
