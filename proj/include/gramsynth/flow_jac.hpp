#pragma once

// Trajectory solves, residual vectors and Jacobian-input products obtained
// from augmented variational equations.

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gramsynth/control.hpp"
#include "gramsynth/errors.hpp"
#include "gramsynth/ode.hpp"
#include "gramsynth/parallel.hpp"
#include "gramsynth/systems.hpp"

namespace gramsynth {

struct Trajectory {
  SystemPtr system;
  ControlFunction control;
  std::shared_ptr<const ode::DenseSolution> solution;
  Vec endpoint;

  double t0() const { return solution->t_start(); }
  double T() const { return solution->t_end(); }
  Vec state(double t) const { return solution->eval(t); }
};

enum class ProductKind { FlowInput, StmInput, ChainInput };

struct JacobianProduct {
  double t = 0.0;
  Mat matrix;
  ProductKind kind = ProductKind::FlowInput;
};

/// Dense solution of x' = N_t(x) + B_t(x) u(t), x(t0) = x0.
inline Trajectory solve_trajectory(const SteeringProblem& problem, const ControlFunction& u,
                                   const ode::SolverConfig& config) {
  problem.validate();
  if (!u.valid() || u.k() != problem.k())
    throw InvalidArgument("solve_trajectory: control dimension does not match the system");
  const auto& sys = *problem.system;
  Vec uv(sys.k);
  Mat b(sys.d, sys.k);
  ode::OdeProblem p;
  p.field = [&](double t, const Vec& x, Vec& dx) {
    u.eval_into(t, uv);
    sys.controlled_field(t, x, uv, dx, b);
  };
  p.t_start = problem.t0;
  p.t_end = problem.T;
  p.y0 = problem.x0;
  Trajectory traj;
  traj.system = problem.system;
  traj.control = u;
  try {
    traj.solution = std::make_shared<const ode::DenseSolution>(ode::integrate(p, config));
  } catch (const NonFiniteState& e) {
    throw NonFiniteState(std::string("trajectory blow-up: ") + e.what());
  }
  traj.endpoint = traj.solution->final_state();
  if (!traj.endpoint.allFinite()) throw NonFiniteState("trajectory endpoint is not finite");
  return traj;
}

/// y_i = Phi_{T,tau}(x1) - Phi_{t0,tau}(x0).
inline Vec residual(const SteeringProblem& problem, const ode::SolverConfig& config) {
  problem.validate();
  const auto& sys = *problem.system;
  const double tau = problem.tau();
  return drift_flow(sys, problem.T, tau, problem.x1, config) -
         drift_flow(sys, problem.t0, tau, problem.x0, config);
}

/// Solves the coupled drift/variational system
///   y' = N_s(y), Y' = D_xN_s(y) Y,  y(s) = x, Y(s) = Y0
/// from s to tau and returns Y(tau) = DPhi_{s,tau}(x) Y0.
inline Mat drift_variational(const ControlAffineSystem& sys, double s, double tau, const Vec& x,
                             const Mat& Y0, const ode::SolverConfig& config) {
  if (s == tau) return Y0;
  const Eigen::Index d = sys.d;
  const Eigen::Index m = Y0.cols();
  Vec z(d + d * m);
  z.head(d) = x;
  z.tail(d * m) = Eigen::Map<const Vec>(Y0.data(), d * m);
  Mat A(d, d);
  Vec dy(d);
  ode::OdeProblem p;
  p.field = [&](double t, const Vec& zz, Vec& dz) {
    const Vec y = zz.head(d);
    sys.drift(t, y, dy);
    dz.head(d) = dy;
    sys.drift_jacobian(t, y, A);
    Eigen::Map<const Mat> Y(zz.data() + d, d, m);
    Eigen::Map<Mat> dY(dz.data() + d, d, m);
    dY.noalias() = A * Y;
  };
  p.t_start = s;
  p.t_end = tau;
  p.y0 = std::move(z);
  const Vec zT = ode::propagate(p, config).state;
  return Eigen::Map<const Mat>(zT.data() + d, d, m);
}

/// Full flow Jacobian DPhi_{s,tau}(x).
inline Mat flow_jacobian(const ControlAffineSystem& sys, double s, double tau, const Vec& x,
                         const ode::SolverConfig& config) {
  return drift_variational(sys, s, tau, x, Mat::Identity(sys.d, sys.d), config);
}

/// DPhi_{t,tau}(x_u(t)) B_t(x_u(t)).
inline JacobianProduct flow_input_product(const Trajectory& traj, double t, double tau,
                                          const ode::SolverConfig& config) {
  const auto& sys = *traj.system;
  const Vec x = traj.solution->eval(t);
  JacobianProduct out;
  out.t = t;
  out.kind = ProductKind::FlowInput;
  out.matrix = drift_variational(sys, t, tau, x, sys.input_at(t, x), config);
  return out;
}

/// Solves Y' = D_x[N_s + B_s u(s)](x_u(s)) Y forward from s=t, Y(t)=Y0, to
/// the trajectory's final time, reading x_u from the dense interpolant.
inline Mat closed_loop_variational(const Trajectory& traj, const ControlFunction& u, double t,
                                   const Mat& Y0, const ode::SolverConfig& config) {
  const double T = traj.T();
  if (t == T) return Y0;
  const auto& sys = *traj.system;
  const Eigen::Index d = sys.d;
  const Eigen::Index m = Y0.cols();
  Mat A(d, d), scratch(d, d);
  Vec x(d), uv(sys.k);
  ode::OdeProblem p;
  p.field = [&](double s, const Vec& zz, Vec& dz) {
    traj.solution->eval_into(s, x);
    u.eval_into(s, uv);
    sys.closed_loop_jacobian_into(s, x, uv, A, scratch);
    Eigen::Map<const Mat> Y(zz.data(), d, m);
    Eigen::Map<Mat> dY(dz.data(), d, m);
    dY.noalias() = A * Y;
  };
  p.t_start = t;
  p.t_end = T;
  p.y0 = Eigen::Map<const Vec>(Y0.data(), d * m);
  const Vec zT = ode::propagate(p, config).state;
  return Eigen::Map<const Mat>(zT.data(), d, m);
}

/// R_u(T,t) B_t(x_u(t)).
inline JacobianProduct stm_input_product(const Trajectory& traj, const ControlFunction& u,
                                         double t, const ode::SolverConfig& config) {
  const auto& sys = *traj.system;
  const Vec x = traj.solution->eval(t);
  JacobianProduct out;
  out.t = t;
  out.kind = ProductKind::StmInput;
  out.matrix = closed_loop_variational(traj, u, t, sys.input_at(t, x), config);
  return out;
}

/// DPhi_{T,tau}(x_u(T)) R_u(T,t) B_t(x_u(t)).
inline JacobianProduct chain_input_product(const Trajectory& traj, const ControlFunction& u,
                                           double t, double tau,
                                           const ode::SolverConfig& config) {
  JacobianProduct out = stm_input_product(traj, u, t, config);
  out.kind = ProductKind::ChainInput;
  const double T = traj.T();
  if (tau != T) out.matrix = drift_variational(*traj.system, T, tau, traj.endpoint, out.matrix, config);
  return out;
}

/// Dense solution of Z(s) = R_u(T,s), stored column-major as a d*d vector,
/// from one backward solve of Z' = -Z A(s), Z(T) = Id. Gives R_u(T,t) at
/// every t from a single integration.
inline std::shared_ptr<const ode::DenseSolution> transition_to_final(
    const Trajectory& traj, const ControlFunction& u, const ode::SolverConfig& config) {
  const auto& sys = *traj.system;
  const Eigen::Index d = sys.d;
  Mat A(d, d), scratch(d, d);
  Vec x(d), uv(sys.k);
  ode::OdeProblem p;
  p.field = [&](double s, const Vec& zz, Vec& dz) {
    traj.solution->eval_into(s, x);
    u.eval_into(s, uv);
    sys.closed_loop_jacobian_into(s, x, uv, A, scratch);
    Eigen::Map<const Mat> Z(zz.data(), d, d);
    Eigen::Map<Mat> dZ(dz.data(), d, d);
    dZ.noalias() = -Z * A;
  };
  p.t_start = traj.T();
  p.t_end = traj.t0();
  const Mat I = Mat::Identity(d, d);
  p.y0 = Eigen::Map<const Vec>(I.data(), d * d);
  return std::make_shared<const ode::DenseSolution>(ode::integrate(p, config));
}

inline Mat unpack_square(const Vec& v, Eigen::Index d) { return Eigen::Map<const Mat>(v.data(), d, d); }

/// flow_input_product at every time in `times`, gathered in index order.
inline std::vector<Mat> flow_input_products(const Trajectory& traj, const Vec& times, double tau,
                                            const ode::SolverConfig& config, unsigned workers) {
  return parallel_map(static_cast<std::size_t>(times.size()), workers, [&](std::size_t i) {
    return flow_input_product(traj, times[static_cast<Eigen::Index>(i)], tau, config).matrix;
  });
}

/// |x_u(t) - Phi_{tau,t}(Phi_{t0,tau}(x0) + I_u(t))| with
/// I_u(t) = int_{t0}^t DPhi_{s,tau}(x_u(s)) B_s(x_u(s)) u(s) ds evaluated by
/// composite Simpson on `nodes` points.
inline double flow_conjugate_check(const SteeringProblem& problem, const Trajectory& traj, double t,
                                   const ode::SolverConfig& config, Eigen::Index nodes = 201,
                                   unsigned workers = 1) {
  if (t < problem.t0 || t > problem.T) throw OutOfSpan("flow_conjugate_check: t outside span");
  if (nodes < 3 || nodes % 2 == 0) throw InvalidQuadrature("flow_conjugate_check: nodes must be odd and >= 3");
  const auto& sys = *problem.system;
  const double tau = problem.tau();
  Vec integral = Vec::Zero(sys.d);
  if (t > problem.t0) {
    const Vec s = uniform_grid(problem.t0, t, nodes);
    const double h = (t - problem.t0) / static_cast<double>(nodes - 1);
    const auto D = flow_input_products(traj, s, tau, config, workers);
    for (Eigen::Index i = 0; i < nodes; ++i) {
      const double w = (i == 0 || i == nodes - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      integral.noalias() += (w * h / 3.0) * (D[static_cast<std::size_t>(i)] * traj.control(s[i]));
    }
  }
  const Vec shifted = drift_flow(sys, problem.t0, tau, problem.x0, config) + integral;
  const Vec rebuilt = drift_flow(sys, tau, t, shifted, config);
  return (traj.solution->eval(t) - rebuilt).norm();
}

}  // namespace gramsynth
