#pragma once

// Experiment harness: JSON configs, run artifacts, baselines and the
// subcommands exposed by the command-line tool.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gramsynth/control.hpp"
#include "gramsynth/errors.hpp"
#include "gramsynth/flow_jac.hpp"
#include "gramsynth/parallel.hpp"
#include "gramsynth/picard.hpp"
#include "gramsynth/systems.hpp"

namespace gramsynth::harness {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kSchema = "gramsynth.run/v1";

// ---------------------------------------------------------------- numbers

/// Non-finite values are written as the strings "inf", "-inf" and "nan".
inline json num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double num_from(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw ConfigError("expected a number, got '" + s + "'");
  }
  return j.get<double>();
}

inline json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

inline Vec vec_from(const json& j) {
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = num_from(j[i]);
  return v;
}

/// Shortest text that reads back to the same double.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// ---------------------------------------------------------------- config

struct OutputOptions {
  std::string dir = "out";
  Eigen::Index samples = 501;
  std::string format = "csv";
};

struct ScaleOptions {
  std::vector<int> dims = {2, 8, 32};
  int trials = 5;
};

struct UnderactuatedOptions {
  int d = 100;
  int k = 50;
  double T = 4.0;
  double coefficient_std = 0.2;
};

struct ExperimentConfig {
  std::string system = "unicycle";
  BenchmarkParams params;
  SynthesisConfig synthesis;
  std::uint64_t seed = 0;
  OutputOptions output;
  ScaleOptions scale;
  UnderactuatedOptions underactuated;
  /// Explicit Chebyshev coefficients (k rows of 6) for the reference command.
  std::optional<Mat> reference_coefficients;
  json raw = json::object();
};

namespace detail {

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace detail

/// Parses and validates an experiment config. Unknown keys are rejected.
inline ExperimentConfig parse_config(const json& j) {
  using detail::read;
  ExperimentConfig c;
  c.raw = j;
  try {
    detail::check_keys(j, {"system", "synthesis", "seed", "workers", "output", "scale", "underactuated", "reference"},
                       "config");
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("system")) {
      const json& s = j.at("system");
      detail::check_keys(s, {"name", "t0", "T", "x0", "x1", "anchor", "d", "k", "seed", "alpha", "beta",
                             "spectral_radius", "target_box"},
                         "system");
      read(s, "name", c.system);
      if (s.contains("t0")) c.params.t0 = s.at("t0").get<double>();
      if (s.contains("T")) c.params.T = s.at("T").get<double>();
      if (s.contains("x0")) c.params.x0 = vec_from(s.at("x0"));
      if (s.contains("x1")) c.params.x1 = vec_from(s.at("x1"));
      if (s.contains("anchor")) {
        const int a = s.at("anchor").get<int>();
        if (a != 1 && a != 2) throw ConfigError("system.anchor must be 1 or 2");
        c.params.anchor = a == 1 ? Anchor::Initial : Anchor::Final;
      }
      read(s, "d", c.params.d);
      read(s, "k", c.params.k);
      read(s, "alpha", c.params.alpha);
      read(s, "beta", c.params.beta);
      read(s, "spectral_radius", c.params.spectral_radius);
      read(s, "target_box", c.params.target_box);
      if (s.contains("seed")) c.params.seed = s.at("seed").get<std::uint64_t>();
      else c.params.seed = c.seed;
    } else {
      c.params.seed = c.seed;
    }
    if (j.contains("synthesis")) {
      const json& s = j.at("synthesis");
      detail::check_keys(s, {"map", "N_max", "eps_x", "eps_u", "K", "M", "strategy", "eps_reg", "rtol", "atol",
                             "max_steps", "method", "fp_grid", "require_invertible_initial", "chain",
                             "divergence_guard"},
                         "synthesis");
      auto& sc = c.synthesis;
      if (s.contains("map")) {
        const auto m = s.at("map").get<std::string>();
        if (m == "general") sc.map = MapKind::General;
        else if (m == "minimum_energy") sc.map = MapKind::MinimumEnergy;
        else throw ConfigError("synthesis.map must be 'general' or 'minimum_energy'");
      }
      read(s, "N_max", sc.N_max);
      read(s, "eps_x", sc.eps_x);
      read(s, "eps_u", sc.eps_u);
      if (s.contains("K")) sc.K = s.at("K").get<Eigen::Index>();
      if (s.contains("M")) sc.M = s.at("M").get<Eigen::Index>();
      if (s.contains("strategy")) {
        const auto v = s.at("strategy").get<std::string>();
        if (v == "on_demand") sc.strategy = EvalStrategy::OnDemand;
        else if (v == "dense_interpolant") sc.strategy = EvalStrategy::DenseInterpolant;
        else if (v != "auto") throw ConfigError("synthesis.strategy must be on_demand, dense_interpolant or auto");
      }
      read(s, "eps_reg", sc.eps_reg);
      read(s, "rtol", sc.solver.rtol);
      read(s, "atol", sc.solver.atol);
      read(s, "max_steps", sc.solver.max_steps);
      if (s.contains("method")) sc.solver.method = ode::method_from_string(s.at("method").get<std::string>());
      if (s.contains("fp_grid")) sc.fp_grid = s.at("fp_grid").get<Eigen::Index>();
      read(s, "require_invertible_initial", sc.require_invertible_initial);
      read(s, "divergence_guard", sc.divergence_guard);
      if (s.contains("chain")) {
        const auto v = s.at("chain").get<std::string>();
        if (v == "per_node") sc.chain = ChainStrategy::PerNode;
        else if (v == "shared_transition") sc.chain = ChainStrategy::SharedTransition;
        else throw ConfigError("synthesis.chain must be per_node or shared_transition");
      }
    }
    if (j.contains("workers")) c.synthesis.workers = j.at("workers").get<unsigned>();
    if (j.contains("output")) {
      const json& o = j.at("output");
      detail::check_keys(o, {"dir", "samples", "format"}, "output");
      read(o, "dir", c.output.dir);
      if (o.contains("samples")) c.output.samples = o.at("samples").get<Eigen::Index>();
      read(o, "format", c.output.format);
    }
    if (j.contains("scale")) {
      const json& s = j.at("scale");
      detail::check_keys(s, {"dims", "trials"}, "scale");
      read(s, "dims", c.scale.dims);
      read(s, "trials", c.scale.trials);
    }
    if (j.contains("underactuated")) {
      const json& s = j.at("underactuated");
      detail::check_keys(s, {"d", "k", "T", "coefficient_std"}, "underactuated");
      read(s, "d", c.underactuated.d);
      read(s, "k", c.underactuated.k);
      read(s, "T", c.underactuated.T);
      read(s, "coefficient_std", c.underactuated.coefficient_std);
    }
    if (j.contains("reference")) {
      const json& r = j.at("reference");
      detail::check_keys(r, {"coefficients"}, "reference");
      if (r.contains("coefficients")) {
        const json& rows = r.at("coefficients");
        Mat m(static_cast<Eigen::Index>(rows.size()), 6);
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (rows[i].size() != 6) throw ConfigError("reference.coefficients rows need 6 entries");
          for (std::size_t q = 0; q < 6; ++q) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) = rows[i][q].get<double>();
        }
        c.reference_coefficients = m;
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  {
    const auto& names = benchmark_names();
    if (std::find(names.begin(), names.end(), c.system) == names.end())
      throw ConfigError("unknown system '" + c.system + "'");
    if (c.output.format != "csv" && c.output.format != "json")
      throw ConfigError("output.format must be csv or json");
    if (c.output.samples < 2) throw ConfigError("output.samples must be >= 2");
    if (c.scale.trials < 1) throw ConfigError("scale.trials must be >= 1");
    if (!std::is_sorted(c.scale.dims.begin(), c.scale.dims.end()) || c.scale.dims.empty())
      throw ConfigError("scale.dims must be a non-empty ascending list");
    try {
      c.synthesis.validate();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------- artifacts

struct Samples {
  Vec t;
  /// One column per time.
  Mat values;
};

struct RunArtifact {
  std::string schema = kSchema;
  std::string command;
  std::string system;
  std::string status;
  std::vector<std::string> fired;
  std::string message;
  bool success = false;
  std::uint64_t seed = 0;
  json config = json::object();
  json summary = json::object();
  std::vector<IterationRecord> telemetry;
  Samples control;
  Samples trajectory;
};

inline json record_json(const IterationRecord& r) {
  return {{"n", r.n},
          {"err_end", num(r.err_end)},
          {"err_fp", num(r.err_fp)},
          {"energy", num(r.energy)},
          {"energy_sq_norm", num(r.energy_sq_norm)},
          {"gramian_condition", num(r.gramian_condition)},
          {"wall_time", num(r.wall_time)},
          {"certificate", num(r.certificate)},
          {"least_squares", r.least_squares}};
}

inline IterationRecord record_from(const json& j) {
  IterationRecord r;
  r.n = j.at("n").get<int>();
  r.err_end = num_from(j.at("err_end"));
  r.err_fp = num_from(j.at("err_fp"));
  r.energy = num_from(j.at("energy"));
  r.energy_sq_norm = num_from(j.at("energy_sq_norm"));
  r.gramian_condition = num_from(j.at("gramian_condition"));
  r.wall_time = num_from(j.at("wall_time"));
  r.certificate = num_from(j.at("certificate"));
  r.least_squares = j.at("least_squares").get<bool>();
  return r;
}

inline json samples_json(const Samples& s) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < s.values.cols(); ++i) rows.push_back(vec_json(s.values.col(i)));
  return {{"t", vec_json(s.t)}, {"values", rows}};
}

inline Samples samples_from(const json& j) {
  Samples s;
  s.t = vec_from(j.at("t"));
  const json& rows = j.at("values");
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index m = n == 0 ? 0 : static_cast<Eigen::Index>(rows[0].size());
  s.values.resize(m, n);
  for (Eigen::Index i = 0; i < n; ++i) s.values.col(i) = vec_from(rows[static_cast<std::size_t>(i)]);
  return s;
}

inline json to_json(const RunArtifact& a) {
  json tel = json::array();
  for (const auto& r : a.telemetry) tel.push_back(record_json(r));
  return {{"schema", a.schema},       {"command", a.command}, {"system", a.system},
          {"status", a.status},       {"fired", a.fired},     {"message", a.message},
          {"success", a.success},     {"seed", a.seed},       {"config", a.config},
          {"summary", a.summary},     {"telemetry", tel},     {"control", samples_json(a.control)},
          {"trajectory", samples_json(a.trajectory)}};
}

inline RunArtifact artifact_from(const json& j) {
  RunArtifact a;
  a.schema = j.at("schema").get<std::string>();
  if (a.schema != kSchema) throw ConfigError("unsupported artifact schema '" + a.schema + "'");
  a.command = j.at("command").get<std::string>();
  a.system = j.at("system").get<std::string>();
  a.status = j.at("status").get<std::string>();
  a.fired = j.at("fired").get<std::vector<std::string>>();
  a.message = j.at("message").get<std::string>();
  a.success = j.at("success").get<bool>();
  a.seed = j.at("seed").get<std::uint64_t>();
  a.config = j.at("config");
  a.summary = j.at("summary");
  for (const auto& r : j.at("telemetry")) a.telemetry.push_back(record_from(r));
  a.control = samples_from(j.at("control"));
  a.trajectory = samples_from(j.at("trajectory"));
  return a;
}

inline std::string telemetry_csv(const std::vector<IterationRecord>& records) {
  std::ostringstream os;
  os << "n,err_end,err_fp,energy,energy_sq_norm,gramian_condition,wall_time\n";
  for (const auto& r : records) {
    os << r.n << ',' << fmt(r.err_end) << ',' << fmt(r.err_fp) << ',' << fmt(r.energy) << ','
       << fmt(r.energy_sq_norm) << ',' << fmt(r.gramian_condition) << ',' << fmt(r.wall_time) << '\n';
  }
  return os.str();
}

inline std::string samples_csv(const Samples& s, char prefix) {
  std::ostringstream os;
  os << 't';
  for (Eigen::Index i = 0; i < s.values.rows(); ++i) os << ',' << prefix << (i + 1);
  os << '\n';
  for (Eigen::Index c = 0; c < s.values.cols(); ++c) {
    os << fmt(s.t[c]);
    for (Eigen::Index i = 0; i < s.values.rows(); ++i) os << ',' << fmt(s.values(i, c));
    os << '\n';
  }
  return os.str();
}

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

/// Writes summary.json, telemetry.csv (or telemetry.json), control.csv and
/// trajectory.csv into `dir`.
inline void save_artifact(const RunArtifact& a, const fs::path& dir, const std::string& format = "csv") {
  fs::create_directories(dir);
  write_file(dir / "summary.json", to_json(a).dump(2) + "\n");
  if (format == "json") {
    json tel = json::array();
    for (const auto& r : a.telemetry) tel.push_back(record_json(r));
    write_file(dir / "telemetry.json", tel.dump(2) + "\n");
  } else {
    write_file(dir / "telemetry.csv", telemetry_csv(a.telemetry));
  }
  if (a.control.values.size() > 0) write_file(dir / "control.csv", samples_csv(a.control, 'u'));
  if (a.trajectory.values.size() > 0) write_file(dir / "trajectory.csv", samples_csv(a.trajectory, 'x'));
}

inline RunArtifact load_artifact(const fs::path& dir) {
  std::ifstream in(dir / "summary.json");
  if (!in) throw Error("cannot open '" + (dir / "summary.json").string() + "'");
  json j;
  in >> j;
  return artifact_from(j);
}

inline Samples sample_control(const ControlFunction& u, Eigen::Index n) {
  Samples s;
  s.t = uniform_grid(u.t0(), u.T(), n);
  s.values = u.sample(s.t);
  return s;
}

inline Samples sample_trajectory(const Trajectory& traj, Eigen::Index n) {
  Samples s;
  s.t = uniform_grid(traj.t0(), traj.T(), n);
  s.values.resize(traj.system->d, n);
  for (Eigen::Index i = 0; i < n; ++i) s.values.col(i) = traj.solution->eval(s.t[i]);
  return s;
}

// ---------------------------------------------------------------- controls

/// Degree-5 Chebyshev series per channel on [t0, T]; `coefficients` is k x 6.
inline ControlFunction chebyshev_control(const Mat& coefficients, double t0, double T) {
  if (coefficients.cols() != 6) throw InvalidArgument("chebyshev_control: need 6 coefficients per channel");
  const int k = static_cast<int>(coefficients.rows());
  return ControlFunction::closed_form(k, t0, T, [coefficients, t0, T](double t, Vec& out) {
    const double s = 2.0 * (t - t0) / (T - t0) - 1.0;
    double basis[6];
    basis[0] = 1.0;
    basis[1] = s;
    for (int m = 2; m < 6; ++m) basis[m] = 2.0 * s * basis[m - 1] - basis[m - 2];
    out.resize(coefficients.rows());
    for (Eigen::Index j = 0; j < coefficients.rows(); ++j) {
      double acc = 0.0;
      for (int m = 0; m < 6; ++m) acc += coefficients(j, m) * basis[m];
      out[j] = acc;
    }
  });
}

/// Coefficients drawn i.i.d. from N(0, std^2) with the given seed.
inline Mat chebyshev_coefficients(int k, std::uint64_t seed, double std_dev = 0.2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std_dev);
  Mat c(k, 6);
  for (int j = 0; j < k; ++j)
    for (int m = 0; m < 6; ++m) c(j, m) = normal(rng);
  return c;
}

inline ControlFunction cmd_reference_control(int k, double t0, double T, std::uint64_t seed,
                                             double std_dev = 0.2) {
  return chebyshev_control(chebyshev_coefficients(k, seed, std_dev), t0, T);
}

struct BaselineResult {
  ControlFunction control;
  double energy = 0.0;
};

/// Feedback linearization along the straight line from x0 to x1:
/// u(t) = B(x_ref)^{-1} (x_ref' - N_t(x_ref)).
inline BaselineResult feedback_linearization_baseline(const SteeringProblem& problem) {
  problem.validate();
  const auto sys = problem.system;
  if (sys->k != sys->d) throw NotFullyActuated("feedback linearization needs k = d, system '" + sys->name + "' has k < d");
  const double t0 = problem.t0, T = problem.T;
  const Vec x0 = problem.x0;
  const Vec slope = (problem.x1 - problem.x0) / (T - t0);
  for (double t : {t0, 0.5 * (t0 + T), T}) {
    const Vec x = x0 + (t - t0) * slope;
    Eigen::FullPivLU<Mat> lu(sys->input_at(t, x));
    if (!lu.isInvertible()) throw NotFullyActuated("input matrix is singular along the reference path");
  }
  BaselineResult out;
  out.control = ControlFunction::closed_form(sys->k, t0, T, [sys, x0, slope, t0](double t, Vec& u) {
    const Vec x = x0 + (t - t0) * slope;
    u = sys->input_at(t, x).fullPivLu().solve(slope - sys->drift_at(t, x));
  });
  out.energy = control_energy(out.control, t0, T);
  return out;
}

// ---------------------------------------------------------------- commands

struct CommandOptions {
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> format;
  std::optional<unsigned> workers;
};

inline ExperimentConfig apply_options(ExperimentConfig c, const CommandOptions& o) {
  if (o.out) c.output.dir = *o.out;
  if (o.seed) {
    c.seed = *o.seed;
    if (!c.raw.contains("system") || !c.raw["system"].contains("seed")) c.params.seed = *o.seed;
  }
  if (o.format) {
    if (*o.format != "csv" && *o.format != "json") throw ConfigError("--format must be csv or json");
    c.output.format = *o.format;
  }
  if (o.workers) c.synthesis.workers = *o.workers;
  return c;
}

inline json echo(const ExperimentConfig& c) {
  json e = c.raw;
  e["seed"] = c.seed;
  e["workers"] = c.synthesis.workers;
  e["output"]["dir"] = c.output.dir;
  e["output"]["format"] = c.output.format;
  return e;
}

inline RunArtifact artifact_from_run(const std::string& command, const ExperimentConfig& c,
                                     const SteeringProblem& problem, const PicardResult& r) {
  RunArtifact a;
  a.command = command;
  a.system = c.system;
  a.status = to_string(r.status);
  for (auto f : r.fired) a.fired.push_back(to_string(f));
  a.message = r.message;
  a.success = is_success(r.status);
  a.seed = c.seed;
  a.config = echo(c);
  a.telemetry = r.records;
  int to_floor = -1;
  for (const auto& rec : r.records) {
    if (rec.err_end <= c.synthesis.eps_x) {
      to_floor = rec.n;
      break;
    }
  }
  const double e = r.records.empty() ? 0.0 : r.records.back().energy;
  const double sq = r.records.empty() ? 0.0 : r.records.back().energy_sq_norm;
  a.summary = {{"iterations", r.iterations()},
               {"iterations_to_floor", to_floor},
               {"final_err_end", num(r.final_err_end())},
               {"energy", num(e)},
               {"energy_sq_norm", num(sq)},
               {"l2_norm", num(std::sqrt(sq))},
               {"certificate", num(r.certificate)},
               {"map_image_energy", num(r.map_image_energy)},
               {"initial_gramian_invertible", r.initial_gramian_invertible},
               {"map", to_string(c.synthesis.map)},
               {"anchor", problem.anchor == Anchor::Initial ? 1 : 2},
               {"K", quadrature_points(c.synthesis, problem.d())},
               {"strategy", to_string(eval_strategy(c.synthesis, problem.d()))},
               {"y", vec_json(r.y)},
               {"lambda", vec_json(r.lambda)}};
  if (r.control.valid()) a.control = sample_control(r.control, c.output.samples);
  if (r.trajectory) a.trajectory = sample_trajectory(*r.trajectory, c.output.samples);
  return a;
}

inline SteeringProblem build_problem(const ExperimentConfig& c) {
  try {
    return make_benchmark(c.system, c.params);
  } catch (const UnknownSystem& e) {
    throw ConfigError(e.what());
  }
}

/// Runs the Picard iteration described by the config and writes the artifact.
inline RunArtifact cmd_synthesize(const ExperimentConfig& c) {
  const auto problem = build_problem(c);
  const auto r = run_picard(problem, c.synthesis);
  auto a = artifact_from_run("synthesize", c, problem, r);
  save_artifact(a, c.output.dir, c.output.format);
  return a;
}

/// Feedback-linearization baseline for a fully actuated system.
inline RunArtifact cmd_baseline(const ExperimentConfig& c) {
  const auto problem = build_problem(c);
  RunArtifact a;
  a.command = "baseline";
  a.system = c.system;
  a.seed = c.seed;
  a.config = echo(c);
  try {
    const auto b = feedback_linearization_baseline(problem);
    const auto traj = solve_trajectory(problem, b.control, c.synthesis.solver);
    const double err = endpoint_error(traj, problem.x1);
    a.status = "ok";
    a.success = true;
    a.summary = {{"final_err_end", num(err)},
                 {"energy", num(b.energy)},
                 {"energy_sq_norm", num(2.0 * b.energy)},
                 {"l2_norm", num(std::sqrt(2.0 * b.energy))},
                 {"reference_path", "straight_line"}};
    a.control = sample_control(b.control, c.output.samples);
    a.trajectory = sample_trajectory(traj, c.output.samples);
  } catch (const NotFullyActuated& e) {
    a.status = "not_fully_actuated";
    a.message = e.what();
    a.success = false;
  }
  save_artifact(a, c.output.dir, c.output.format);
  return a;
}

/// Samples a seeded degree-5 Chebyshev reference control and its trajectory.
inline RunArtifact cmd_reference(const ExperimentConfig& c) {
  const auto problem = build_problem(c);
  const ControlFunction u =
      c.reference_coefficients
          ? chebyshev_control(*c.reference_coefficients, problem.t0, problem.T)
          : cmd_reference_control(problem.k(), problem.t0, problem.T, c.seed, c.underactuated.coefficient_std);
  if (u.k() != problem.k()) throw ConfigError("reference.coefficients must have k rows");
  const auto traj = solve_trajectory(problem, u, c.synthesis.solver);
  RunArtifact a;
  a.command = "reference";
  a.system = c.system;
  a.seed = c.seed;
  a.config = echo(c);
  a.status = "ok";
  a.success = true;
  const double e = control_energy(u, problem.t0, problem.T);
  a.summary = {{"energy", num(e)},
               {"energy_sq_norm", num(2.0 * e)},
               {"l2_norm", num(std::sqrt(2.0 * e))},
               {"endpoint", vec_json(traj.endpoint)}};
  a.control = sample_control(u, c.output.samples);
  a.trajectory = sample_trajectory(traj, c.output.samples);
  save_artifact(a, c.output.dir, c.output.format);
  return a;
}

struct ScaleRow {
  int d = 0;
  std::vector<double> iteration_time;
  std::vector<double> err_end;
  int failures = 0;
};

inline std::uint64_t trial_seed(std::uint64_t base, int d, int trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(trial)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0};
}

/// General synthesis on mindy_like(d, d) for every d and trial. Trials run
/// on up to `workers` threads; each writes its own directory.
inline std::vector<ScaleRow> cmd_scale(const ExperimentConfig& c) {
  struct Job {
    int d;
    int trial;
  };
  std::vector<Job> jobs;
  for (int d : c.scale.dims)
    for (int t = 0; t < c.scale.trials; ++t) jobs.push_back({d, t});
  const fs::path root = c.output.dir;
  fs::create_directories(root);
  struct Outcome {
    bool ok = false;
    double iteration_time = 0.0;
    double err_end = 0.0;
  };
  const unsigned outer = c.synthesis.workers == 0 ? default_workers() : c.synthesis.workers;
  const auto outcomes = parallel_map(jobs.size(), outer, [&](std::size_t i) {
    const Job job = jobs[i];
    ExperimentConfig tc = c;
    tc.system = "mindy_like";
    tc.params.d = job.d;
    tc.params.k = job.d;
    tc.params.seed = trial_seed(c.seed, job.d, job.trial);
    tc.params.x0.reset();
    tc.params.x1.reset();
    tc.synthesis.map = MapKind::General;
    tc.synthesis.workers = 1;
    tc.output.dir = (root / ("d" + std::to_string(job.d) + "_trial" + std::to_string(job.trial))).string();
    Outcome o;
    try {
      const auto problem = make_benchmark("mindy_like", tc.params);
      const auto start = std::chrono::steady_clock::now();
      const auto r = run_picard(problem, tc.synthesis);
      const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      auto a = artifact_from_run("scale", tc, problem, r);
      a.seed = tc.params.seed;
      save_artifact(a, tc.output.dir, tc.output.format);
      o.ok = is_success(r.status);
      o.iteration_time = total / static_cast<double>(r.records.size());
      o.err_end = r.final_err_end();
    } catch (const Error& e) {
      RunArtifact a;
      a.command = "scale";
      a.system = "mindy_like";
      a.status = "error";
      a.message = e.what();
      a.seed = tc.params.seed;
      a.config = echo(tc);
      save_artifact(a, tc.output.dir, tc.output.format);
    }
    return o;
  });
  std::vector<ScaleRow> rows;
  for (int d : c.scale.dims) rows.push_back({d, {}, {}, 0});
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    auto& row = *std::find_if(rows.begin(), rows.end(), [&](const ScaleRow& r) { return r.d == jobs[i].d; });
    if (!outcomes[i].ok) {
      ++row.failures;
      continue;
    }
    row.iteration_time.push_back(outcomes[i].iteration_time);
    row.err_end.push_back(outcomes[i].err_end);
  }
  std::ostringstream os;
  os << "d,trials,failures,mean_iteration_time,std_iteration_time,mean_err_end,std_err_end\n";
  for (const auto& r : rows) {
    const auto [mt, st] = mean_std(r.iteration_time);
    const auto [me, se] = mean_std(r.err_end);
    os << r.d << ',' << c.scale.trials << ',' << r.failures << ',' << fmt(mt) << ',' << fmt(st) << ','
       << fmt(me) << ',' << fmt(se) << '\n';
  }
  write_file(root / "scale.csv", os.str());
  return rows;
}

struct UnderactuatedResult {
  RunArtifact artifact;
  PicardResult run;
  ControlFunction reference;
  double reference_energy = 0.0;
  double synthesized_energy = 0.0;
  bool energy_reduced = false;
  bool monotone_decay = false;
};

/// err_end non-increasing up to a factor 2 from iteration 1 until it first
/// reaches `floor`.
inline bool monotone_within(const std::vector<IterationRecord>& r, double factor, double floor) {
  for (std::size_t i = 2; i < r.size(); ++i) {
    if (r[i - 1].err_end <= floor) break;
    if (r[i].err_end > factor * r[i - 1].err_end) return false;
  }
  return true;
}

/// Minimum-energy synthesis on mindy_like(d, k) towards the endpoint of a
/// seeded Chebyshev reference control, starting from x0 ~ N(0, I).
inline UnderactuatedResult cmd_underactuated_demo(const ExperimentConfig& c) {
  const auto& uo = c.underactuated;
  BenchmarkParams p = c.params;
  p.d = uo.d;
  p.k = uo.k;
  p.seed = c.seed;
  p.t0 = 0.0;
  p.T = uo.T;
  std::mt19937_64 rng(trial_seed(c.seed, uo.d, -1));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec x0(uo.d);
  for (int i = 0; i < uo.d; ++i) x0[i] = normal(rng);
  p.x0 = x0;
  p.x1 = Vec::Zero(uo.d);
  auto problem = make_benchmark("mindy_like", p);

  UnderactuatedResult out;
  out.reference = cmd_reference_control(uo.k, problem.t0, problem.T, trial_seed(c.seed, uo.k, -2), uo.coefficient_std);
  problem.x1 = solve_trajectory(problem, out.reference, c.synthesis.solver).endpoint;
  out.reference_energy = control_energy(out.reference, problem.t0, problem.T);

  SynthesisConfig sc = c.synthesis;
  sc.map = MapKind::MinimumEnergy;
  out.run = run_picard(problem, sc);
  out.synthesized_energy = out.run.records.empty() ? 0.0 : out.run.records.back().energy;
  out.energy_reduced = out.synthesized_energy < out.reference_energy;
  out.monotone_decay = monotone_within(out.run.records, 2.0, sc.eps_x);

  ExperimentConfig ec = c;
  ec.system = "mindy_like";
  ec.synthesis = sc;
  out.artifact = artifact_from_run("underactuated", ec, problem, out.run);
  out.artifact.summary["reference_energy"] = num(out.reference_energy);
  out.artifact.summary["reference_l2_norm"] = num(std::sqrt(2.0 * out.reference_energy));
  out.artifact.summary["energy_reduced"] = out.energy_reduced;
  out.artifact.summary["monotone_decay"] = out.monotone_decay;
  save_artifact(out.artifact, c.output.dir, c.output.format);
  write_file(fs::path(c.output.dir) / "reference_control.csv",
             samples_csv(sample_control(out.reference, c.output.samples), 'u'));
  return out;
}

}  // namespace gramsynth::harness
