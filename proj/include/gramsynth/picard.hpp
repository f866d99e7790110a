#pragma once

// The general and minimum-energy synthesis maps and their Picard iteration.

#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gramsynth/control.hpp"
#include "gramsynth/errors.hpp"
#include "gramsynth/flow_jac.hpp"
#include "gramsynth/gramian.hpp"
#include "gramsynth/parallel.hpp"
#include "gramsynth/systems.hpp"

namespace gramsynth {

struct SynthesisConfig {
  MapKind map = MapKind::General;
  int N_max = 20;
  double eps_x = 1e-10;
  double eps_u = 1e-8;
  /// Quadrature points; 0 selects by dimension (see default_quadrature_points).
  Eigen::Index K = 0;
  /// Interpolant grid size for DenseInterpolant; 0 reuses the quadrature nodes.
  Eigen::Index M = 0;
  /// Unset selects OnDemand for d <= 8, DenseInterpolant otherwise.
  std::optional<EvalStrategy> strategy;
  ode::SolverConfig solver;
  double eps_reg = 0.0;
  unsigned workers = 1;
  /// u^(0); Zero when unset.
  std::optional<ControlFunction> initial;
  /// Grid for err_fp and nodes of the energy quadrature.
  Eigen::Index fp_grid = 1001;
  /// Throw SingularGramian when the Gramian at u^(0) does not factorize.
  /// Otherwise the first step uses the minimum-norm least-squares multiplier.
  bool require_invertible_initial = false;
  ChainStrategy chain = ChainStrategy::SharedTransition;
  bool divergence_guard = true;

  void validate() const {
    if (N_max < 1) throw InvalidArgument("SynthesisConfig: N_max must be >= 1");
    if (!(eps_x > 0.0)) throw InvalidArgument("SynthesisConfig: eps_x must be > 0");
    if (!(eps_u > 0.0)) throw InvalidArgument("SynthesisConfig: eps_u must be > 0");
    if (K != 0 && (K < 3 || K % 2 == 0)) throw InvalidQuadrature("SynthesisConfig: K must be odd and >= 3");
    if (M != 0 && M < 2) throw InvalidArgument("SynthesisConfig: M must be >= 2");
    if (fp_grid < 3 || fp_grid % 2 == 0) throw InvalidArgument("SynthesisConfig: fp_grid must be odd and >= 3");
    if (eps_reg < 0.0) throw InvalidArgument("SynthesisConfig: eps_reg must be >= 0");
    solver.validate();
  }
};

inline Eigen::Index default_quadrature_points(int d) {
  if (d <= 10) return 401;
  if (d <= 64) return 1001;
  return 5001;
}

inline Eigen::Index quadrature_points(const SynthesisConfig& c, int d) {
  return c.K != 0 ? c.K : default_quadrature_points(d);
}

inline EvalStrategy eval_strategy(const SynthesisConfig& c, int d) {
  if (c.strategy) return *c.strategy;
  return d <= 8 ? EvalStrategy::OnDemand : EvalStrategy::DenseInterpolant;
}

/// |x_u(T) - x1|.
inline double endpoint_error(const Trajectory& traj, const Vec& x1) { return (traj.endpoint - x1).norm(); }

/// Composite Simpson value of int |u|^2 from k x n samples on a uniform grid.
inline double squared_norm_from_samples(const Mat& samples, double t0, double T) {
  const Eigen::Index n = samples.cols();
  const double h = (T - t0) / static_cast<double>(n - 1);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = (i == 0 || i == n - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    acc += c * samples.col(i).squaredNorm();
  }
  return acc * h / 3.0;
}

/// E(u) = 1/2 int_{t0}^T |u|^2 dt, composite Simpson on `nodes` points.
inline double control_energy(const ControlFunction& u, double t0, double T, Eigen::Index nodes = 1001) {
  if (nodes < 3 || nodes % 2 == 0) throw InvalidQuadrature("control_energy: nodes must be odd and >= 3");
  return 0.5 * squared_norm_from_samples(u.sample(uniform_grid(t0, T, nodes)), t0, T);
}

/// max over a uniform grid of |u_next(t) - u(t)|.
inline double fixed_point_error(const ControlFunction& u_next, const ControlFunction& u,
                                Eigen::Index grid = 1001) {
  if (grid < 2) throw InvalidArgument("fixed_point_error: grid must have >= 2 points");
  const Vec g = uniform_grid(u.t0(), u.T(), grid);
  return (u_next.sample(g) - u.sample(g)).colwise().norm().maxCoeff();
}

struct MapOutput {
  ControlFunction control;
  Trajectory trajectory;
  GramianMatrix gramian;
  Vec y;
  Vec lambda;
  GramianSolve solve;
};

namespace detail {

inline Vec solve_multiplier(const GramianMatrix& G, const Vec& y, double eps, bool allow_least_squares,
                            GramianSolve& info) {
  info = solve_gramian_detailed(G, y, eps);
  if (!allow_least_squares && info.residual > 1e-6 * y.norm()) {
    throw SingularGramian("Gramian solve residual " + std::to_string(info.residual) +
                              " exceeds 1e-6 |y|; the iterate has lost controllability",
                          info.residual);
  }
  return info.lambda;
}

inline SynthesisData make_data(const MapOutput& m, double tau, MapKind kind, EvalStrategy s,
                               Eigen::Index grid) {
  SynthesisData data;
  data.lambda = m.lambda;
  data.tau = tau;
  data.map = kind;
  data.strategy = s;
  data.state = m.trajectory.solution;
  data.grid_size = s == EvalStrategy::DenseInterpolant ? grid : 0;
  return data;
}

}  // namespace detail

/// General map applied along an already solved trajectory with residual y.
inline MapOutput apply_general_map_on(const SteeringProblem& problem, Trajectory traj, const Vec& y,
                                      const SynthesisConfig& config, bool allow_least_squares = false) {
  const auto& sys = *problem.system;
  const double tau = problem.tau();
  const auto rule = simpson_rule(problem.t0, problem.T, quadrature_points(config, sys.d));
  const auto D = flow_input_products(traj, rule.nodes, tau, config.solver, config.workers);
  MapOutput out;
  out.gramian = assemble_symmetric_from(D, rule);
  out.gramian.regularization = config.eps_reg;
  out.y = y;
  out.lambda = detail::solve_multiplier(out.gramian, y, config.eps_reg, allow_least_squares, out.solve);
  out.trajectory = std::move(traj);

  const EvalStrategy strategy = eval_strategy(config, sys.d);
  const auto solution = out.trajectory.solution;
  const auto system = out.trajectory.system;
  const Vec lambda = out.lambda;
  const ode::SolverConfig solver = config.solver;
  if (strategy == EvalStrategy::OnDemand) {
    auto f = [solution, system, lambda, tau, solver](double t, Vec& u) {
      const Vec x = solution->eval(t);
      u = drift_variational(*system, t, tau, x, system->input_at(t, x), solver).transpose() * lambda;
    };
    out.control = ControlFunction::synthesized(sys.k, problem.t0, problem.T, f,
                                               detail::make_data(out, tau, MapKind::General, strategy, 0));
    return out;
  }
  const Eigen::Index M = config.M != 0 ? config.M : rule.K();
  Mat grid(sys.k, M);
  if (M == rule.K()) {
    for (Eigen::Index j = 0; j < M; ++j) grid.col(j) = D[static_cast<std::size_t>(j)].transpose() * lambda;
  } else {
    const auto Dg = flow_input_products(out.trajectory, uniform_grid(problem.t0, problem.T, M), tau,
                                        config.solver, config.workers);
    for (Eigen::Index j = 0; j < M; ++j) grid.col(j) = Dg[static_cast<std::size_t>(j)].transpose() * lambda;
  }
  auto interp = std::make_shared<const UniformCubic>(problem.t0, problem.T, std::move(grid));
  out.control = ControlFunction::synthesized(
      sys.k, problem.t0, problem.T, [interp](double t, Vec& u) { interp->eval_into(t, u); },
      detail::make_data(out, tau, MapKind::General, strategy, M));
  return out;
}

/// u_next(t) = B_t(x_u(t))^T DPhi_{t,tau}(x_u(t))^T lambda with N lambda = y.
inline MapOutput apply_general_map(const SteeringProblem& problem, const ControlFunction& u,
                                   const SynthesisConfig& config) {
  config.validate();
  return apply_general_map_on(problem, solve_trajectory(problem, u, config.solver),
                              residual(problem, config.solver), config);
}

/// Minimum-energy map applied along an already solved trajectory.
inline MapOutput apply_minimum_energy_map_on(const SteeringProblem& problem, Trajectory traj,
                                             const Vec& y, const SynthesisConfig& config,
                                             bool allow_least_squares = false) {
  const auto& sys = *problem.system;
  const double tau = problem.tau();
  const auto rule = simpson_rule(problem.t0, problem.T, quadrature_points(config, sys.d));
  const ControlFunction& u = traj.control;
  const auto D = flow_input_products(traj, rule.nodes, tau, config.solver, config.workers);

  // R_u(T, .) from one backward solve; it also carries the control formula.
  const auto Z = transition_to_final(traj, u, config.solver);
  const Mat P = tau == problem.T ? Mat::Identity(sys.d, sys.d)
                                 : flow_jacobian(sys, problem.T, tau, traj.endpoint, config.solver);
  std::vector<Mat> C;
  if (config.chain == ChainStrategy::PerNode) {
    C = chain_input_products(traj, u, rule.nodes, tau, config.solver, config.workers, ChainStrategy::PerNode);
  } else {
    C = parallel_map(static_cast<std::size_t>(rule.K()), config.workers, [&](std::size_t i) {
      const double t = rule.nodes[static_cast<Eigen::Index>(i)];
      return Mat(P * unpack_square(Z->eval(t), sys.d) * sys.input_at(t, traj.solution->eval(t)));
    });
  }
  MapOutput out;
  out.gramian = assemble_mixed_from(D, C, rule);
  out.gramian.regularization = config.eps_reg;
  out.y = y;
  out.lambda = detail::solve_multiplier(out.gramian, y, config.eps_reg, allow_least_squares, out.solve);
  out.trajectory = std::move(traj);

  // u_next(t) = B_t(x(t))^T R_u(T,t)^T q with q = DPhi_{T,tau}(x(T))^T lambda.
  const Vec q = P.transpose() * out.lambda;
  const auto solution = out.trajectory.solution;
  const auto system = out.trajectory.system;
  const int d = sys.d;
  auto exact = [Z, solution, system, q, d](double t, Vec& v) {
    const Vec x = solution->eval(t);
    v = system->input_at(t, x).transpose() * (unpack_square(Z->eval(t), d).transpose() * q);
  };
  const EvalStrategy strategy = eval_strategy(config, sys.d);
  if (strategy == EvalStrategy::OnDemand) {
    out.control = ControlFunction::synthesized(sys.k, problem.t0, problem.T, exact,
                                               detail::make_data(out, tau, MapKind::MinimumEnergy, strategy, 0));
    return out;
  }
  const Eigen::Index M = config.M != 0 ? config.M : rule.K();
  const Vec nodes = uniform_grid(problem.t0, problem.T, M);
  Mat grid(sys.k, M);
  Vec v(sys.k);
  for (Eigen::Index j = 0; j < M; ++j) {
    exact(nodes[j], v);
    grid.col(j) = v;
  }
  auto interp = std::make_shared<const UniformCubic>(problem.t0, problem.T, std::move(grid));
  out.control = ControlFunction::synthesized(
      sys.k, problem.t0, problem.T, [interp](double t, Vec& w) { interp->eval_into(t, w); },
      detail::make_data(out, tau, MapKind::MinimumEnergy, strategy, M));
  return out;
}

/// u_next(t) = B_t(x_u(t))^T Q_{u,tau}(T,t)^T lambda with G lambda = y.
inline MapOutput apply_minimum_energy_map(const SteeringProblem& problem, const ControlFunction& u,
                                          const SynthesisConfig& config) {
  config.validate();
  return apply_minimum_energy_map_on(problem, solve_trajectory(problem, u, config.solver),
                                     residual(problem, config.solver), config);
}

inline MapOutput apply_map_on(const SteeringProblem& problem, Trajectory traj, const Vec& y,
                              const SynthesisConfig& config, bool allow_least_squares = false) {
  if (config.map == MapKind::General)
    return apply_general_map_on(problem, std::move(traj), y, config, allow_least_squares);
  return apply_minimum_energy_map_on(problem, std::move(traj), y, config, allow_least_squares);
}

struct IterationRecord {
  int n = 0;
  double err_end = 0.0;
  double err_fp = 0.0;
  double energy = 0.0;
  double energy_sq_norm = 0.0;
  double gramian_condition = 0.0;
  double wall_time = 0.0;
  /// 1/2 y^T lambda of the map applied at this iteration.
  double certificate = 0.0;
  bool least_squares = false;
};

enum class Criterion { MaxIterations, EndpointTolerance, ControlTolerance };

inline std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::MaxIterations: return "max_iterations";
    case Criterion::EndpointTolerance: return "endpoint_tolerance";
    default: return "control_tolerance";
  }
}

enum class PicardStatus {
  EndpointTolerance,
  ControlTolerance,
  MaxIterations,
  Diverged,
  SingularGramian,
  IntegrationFailure,
};

inline std::string to_string(PicardStatus s) {
  switch (s) {
    case PicardStatus::EndpointTolerance: return "endpoint_tolerance";
    case PicardStatus::ControlTolerance: return "control_tolerance";
    case PicardStatus::MaxIterations: return "max_iterations";
    case PicardStatus::Diverged: return "diverged";
    case PicardStatus::SingularGramian: return "singular_gramian";
    default: return "integration_failure";
  }
}

inline bool is_success(PicardStatus s) {
  return s == PicardStatus::EndpointTolerance || s == PicardStatus::ControlTolerance ||
         s == PicardStatus::MaxIterations;
}

struct PicardResult {
  PicardStatus status = PicardStatus::MaxIterations;
  std::vector<Criterion> fired;
  std::vector<IterationRecord> records;
  /// Last iterate whose trajectory was solved (u^(n) of the final record).
  ControlFunction control;
  std::optional<Trajectory> trajectory;
  /// Image of `control` under the map; the fixed-point candidate.
  ControlFunction map_image;
  Vec y;
  Vec lambda;
  double certificate = 0.0;
  double map_image_energy = 0.0;
  bool initial_gramian_invertible = false;
  std::string message;

  bool fired_criterion(Criterion c) const {
    for (auto f : fired)
      if (f == c) return true;
    return false;
  }
  double final_err_end() const { return records.empty() ? std::numeric_limits<double>::quiet_NaN() : records.back().err_end; }
  int iterations() const { return records.empty() ? 0 : records.back().n; }
};

/// Picard iteration u^(n+1) = Map(u^(n)). Iteration n solves the trajectory of
/// u^(n), applies the map and records err_end(u^(n)), |u^(n+1) - u^(n)| and
/// E(u^(n)); it stops when n >= N_max, err_end <= eps_x or err_fp <= eps_u.
/// Divergence, a singular Gramian after the first step and integration
/// failures end the run with the corresponding status instead of throwing.
inline PicardResult run_picard(const SteeringProblem& problem, const SynthesisConfig& config) {
  problem.validate();
  config.validate();
  using clock = std::chrono::steady_clock;
  const auto& sys = *problem.system;
  const double t0 = problem.t0, T = problem.T;
  const Vec fp_grid = uniform_grid(t0, T, config.fp_grid);

  PicardResult result;
  result.y = residual(problem, config.solver);
  ControlFunction u = config.initial ? *config.initial : ControlFunction::zero(sys.k, t0, T);
  if (u.k() != sys.k) throw InvalidArgument("run_picard: initial control has wrong dimension");
  Mat u_samples = u.sample(fp_grid);

  for (int n = 0;; ++n) {
    const auto start = clock::now();
    IterationRecord rec;
    rec.n = n;
    Trajectory traj;
    try {
      traj = solve_trajectory(problem, u, config.solver);
    } catch (const Error& e) {
      result.status = PicardStatus::IntegrationFailure;
      result.message = e.what();
      break;
    }
    rec.err_end = endpoint_error(traj, problem.x1);
    rec.energy_sq_norm = squared_norm_from_samples(u_samples, t0, T);
    rec.energy = 0.5 * rec.energy_sq_norm;
    result.control = u;
    result.trajectory = traj;

    MapOutput map;
    try {
      const bool lenient = n == 0 && !config.require_invertible_initial;
      map = apply_map_on(problem, traj, result.y, config, lenient);
    } catch (const SingularGramian& e) {
      result.status = PicardStatus::SingularGramian;
      result.message = e.what();
      break;
    } catch (const Error& e) {
      result.status = PicardStatus::IntegrationFailure;
      result.message = e.what();
      break;
    }
    if (n == 0) {
      result.initial_gramian_invertible =
          !map.solve.least_squares && map.solve.residual <= 1e-6 * result.y.norm();
    }
    Mat next_samples;
    try {
      next_samples = map.control.sample(fp_grid);
    } catch (const Error& e) {
      result.status = PicardStatus::IntegrationFailure;
      result.message = e.what();
      break;
    }
    rec.err_fp = (next_samples - u_samples).colwise().norm().maxCoeff();
    rec.gramian_condition = map.solve.condition;
    rec.certificate = energy_certificate(map.gramian, result.y, map.lambda);
    rec.least_squares = map.solve.least_squares;
    rec.wall_time = std::chrono::duration<double>(clock::now() - start).count();
    result.records.push_back(rec);
    result.map_image = map.control;
    result.lambda = map.lambda;
    result.certificate = rec.certificate;
    result.map_image_energy = 0.5 * squared_norm_from_samples(next_samples, t0, T);

    if (rec.err_end <= config.eps_x) result.fired.push_back(Criterion::EndpointTolerance);
    if (rec.err_fp <= config.eps_u) result.fired.push_back(Criterion::ControlTolerance);
    if (n >= config.N_max) result.fired.push_back(Criterion::MaxIterations);
    if (!result.fired.empty()) {
      const auto first = result.fired.front();
      result.status = first == Criterion::EndpointTolerance ? PicardStatus::EndpointTolerance
                      : first == Criterion::ControlTolerance ? PicardStatus::ControlTolerance
                                                             : PicardStatus::MaxIterations;
      break;
    }
    if (config.divergence_guard && n >= 3) {
      const auto& r = result.records;
      const std::size_t i = r.size() - 1;
      const bool rising = r[i].err_end > r[i - 1].err_end && r[i - 1].err_end > r[i - 2].err_end &&
                          r[i - 2].err_end > r[i - 3].err_end;
      if (rising && r[i].err_end > 10.0 * r[i - 3].err_end) {
        result.status = PicardStatus::Diverged;
        result.message = "endpoint error grew more than tenfold over three iterations";
        break;
      }
    }
    u = map.control;
    u_samples = std::move(next_samples);
  }
  return result;
}

}  // namespace gramsynth
