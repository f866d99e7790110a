#pragma once

// Quadrature assembly of the symmetric and mixed Gramians and the d x d
// linear solves that produce the multiplier lambda.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "gramsynth/errors.hpp"
#include "gramsynth/flow_jac.hpp"
#include "gramsynth/parallel.hpp"

namespace gramsynth {

struct QuadratureRule {
  double t0 = 0.0;
  double T = 1.0;
  Vec nodes;
  Vec weights;

  Eigen::Index K() const { return nodes.size(); }
};

/// Composite Simpson rule on K uniform nodes (K odd, K >= 3).
inline QuadratureRule simpson_rule(double t0, double T, Eigen::Index K) {
  if (K < 3 || K % 2 == 0)
    throw InvalidQuadrature("simpson_rule: K must be odd and >= 3, got " + std::to_string(K));
  if (!(T > t0)) throw InvalidQuadrature("simpson_rule: need t0 < T");
  QuadratureRule r;
  r.t0 = t0;
  r.T = T;
  r.nodes = uniform_grid(t0, T, K);
  const double h = (T - t0) / static_cast<double>(K - 1);
  r.weights.resize(K);
  for (Eigen::Index i = 0; i < K; ++i) {
    const double c = (i == 0 || i == K - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    r.weights[i] = c * h / 3.0;
  }
  return r;
}

enum class GramianKind { Symmetric, Mixed };

struct GramianMatrix {
  Mat matrix;
  GramianKind kind = GramianKind::Symmetric;
  QuadratureRule rule;
  double regularization = 0.0;
  double condition_estimate = std::numeric_limits<double>::infinity();
};

/// Cheap conditioning proxy: squared ratio of the extreme Cholesky diagonal
/// entries (symmetric) or ratio of extreme |U_ii| of the LU factor (mixed).
/// Infinity when the factorization breaks down.
inline double condition_proxy(const Mat& M, GramianKind kind) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (kind == GramianKind::Symmetric) {
    Eigen::LLT<Mat> llt(M);
    if (llt.info() != Eigen::Success) return inf;
    const Vec diag = llt.matrixLLT().diagonal().cwiseAbs();
    const double lo = diag.minCoeff();
    if (!(lo > 0.0)) return inf;
    const double ratio = diag.maxCoeff() / lo;
    return ratio * ratio;
  }
  Eigen::PartialPivLU<Mat> lu(M);
  const Vec diag = lu.matrixLU().diagonal().cwiseAbs();
  const double lo = diag.minCoeff();
  if (!(lo > 0.0)) return inf;
  return diag.maxCoeff() / lo;
}

/// sum_k w_k D_k D_k^T, then symmetrized.
inline GramianMatrix assemble_symmetric_from(const std::vector<Mat>& D, const QuadratureRule& rule) {
  if (static_cast<Eigen::Index>(D.size()) != rule.K())
    throw InvalidArgument("assemble_symmetric: sample count does not match the rule");
  const Eigen::Index d = D.front().rows();
  Mat M = Mat::Zero(d, d);
  for (std::size_t i = 0; i < D.size(); ++i) {
    M.noalias() += rule.weights[static_cast<Eigen::Index>(i)] * (D[i] * D[i].transpose());
  }
  GramianMatrix g;
  g.matrix = 0.5 * (M + M.transpose());
  g.kind = GramianKind::Symmetric;
  g.rule = rule;
  g.condition_estimate = condition_proxy(g.matrix, g.kind);
  return g;
}

/// sum_k w_k D_k C_k^T, no symmetrization.
inline GramianMatrix assemble_mixed_from(const std::vector<Mat>& D, const std::vector<Mat>& C,
                                         const QuadratureRule& rule) {
  if (static_cast<Eigen::Index>(D.size()) != rule.K() || C.size() != D.size())
    throw InvalidArgument("assemble_mixed: sample count does not match the rule");
  const Eigen::Index d = D.front().rows();
  Mat M = Mat::Zero(d, d);
  for (std::size_t i = 0; i < D.size(); ++i) {
    M.noalias() += rule.weights[static_cast<Eigen::Index>(i)] * (D[i] * C[i].transpose());
  }
  GramianMatrix g;
  g.matrix = std::move(M);
  g.kind = GramianKind::Mixed;
  g.rule = rule;
  g.condition_estimate = condition_proxy(g.matrix, g.kind);
  return g;
}

inline GramianMatrix assemble_symmetric(const Trajectory& traj, double tau, const QuadratureRule& rule,
                                        const ode::SolverConfig& config, unsigned workers = 1) {
  return assemble_symmetric_from(flow_input_products(traj, rule.nodes, tau, config, workers), rule);
}

enum class ChainStrategy {
  /// One stm/chain solve per node.
  PerNode,
  /// One backward solve for R_u(T, .) shared by all nodes.
  SharedTransition,
};

/// chain_input_product at every time in `times`, gathered in index order.
inline std::vector<Mat> chain_input_products(const Trajectory& traj, const ControlFunction& u,
                                             const Vec& times, double tau,
                                             const ode::SolverConfig& config, unsigned workers,
                                             ChainStrategy strategy = ChainStrategy::SharedTransition) {
  const std::size_t n = static_cast<std::size_t>(times.size());
  if (strategy == ChainStrategy::PerNode) {
    return parallel_map(n, workers, [&](std::size_t i) {
      return chain_input_product(traj, u, times[static_cast<Eigen::Index>(i)], tau, config).matrix;
    });
  }
  const auto& sys = *traj.system;
  const auto Z = transition_to_final(traj, u, config);
  const Mat P = tau == traj.T() ? Mat::Identity(sys.d, sys.d)
                                : flow_jacobian(sys, traj.T(), tau, traj.endpoint, config);
  return parallel_map(n, workers, [&](std::size_t i) {
    const double t = times[static_cast<Eigen::Index>(i)];
    const Vec x = traj.solution->eval(t);
    return Mat(P * unpack_square(Z->eval(t), sys.d) * sys.input_at(t, x));
  });
}

inline GramianMatrix assemble_mixed(const Trajectory& traj, const ControlFunction& u, double tau,
                                    const QuadratureRule& rule, const ode::SolverConfig& config,
                                    unsigned workers = 1,
                                    ChainStrategy strategy = ChainStrategy::PerNode) {
  auto D = flow_input_products(traj, rule.nodes, tau, config, workers);
  auto C = chain_input_products(traj, u, rule.nodes, tau, config, workers, strategy);
  return assemble_mixed_from(D, C, rule);
}

struct GramianSolve {
  Vec lambda;
  /// |(G + eps Id) lambda - y|
  double residual = 0.0;
  bool least_squares = false;
  double condition = std::numeric_limits<double>::infinity();
};

/// Solves (G + eps Id) lambda = y without raising on a large residual.
inline GramianSolve solve_gramian_detailed(const GramianMatrix& G, const Vec& y, double eps) {
  if (!G.matrix.allFinite()) throw NonFiniteValue("solve_gramian: Gramian is not finite");
  if (G.matrix.rows() != y.size()) throw InvalidArgument("solve_gramian: dimension mismatch");
  if (eps < 0.0) throw InvalidArgument("solve_gramian: regularization must be >= 0");
  const Eigen::Index d = y.size();
  Mat A = G.matrix;
  A.diagonal().array() += eps;
  GramianSolve out;
  out.condition = condition_proxy(A, G.kind);
  bool direct_ok = false;
  if (G.kind == GramianKind::Symmetric) {
    Eigen::LLT<Mat> llt(A);
    if (llt.info() == Eigen::Success) {
      out.lambda = llt.solve(y);
      direct_ok = out.lambda.allFinite() && std::isfinite(out.condition);
    }
  } else {
    Eigen::PartialPivLU<Mat> lu(A);
    out.lambda = lu.solve(y);
    direct_ok = out.lambda.allFinite() && std::isfinite(out.condition);
  }
  if (direct_ok) {
    out.residual = (A * out.lambda - y).norm();
    if (out.residual <= 1e-6 * std::max(y.norm(), std::numeric_limits<double>::min())) return out;
  }
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  out.lambda = svd.solve(y);
  out.least_squares = true;
  out.residual = (A * out.lambda - y).norm();
  const Vec sv = svd.singularValues();
  out.condition = sv[d - 1] > 0.0 ? sv[0] / sv[d - 1] : std::numeric_limits<double>::infinity();
  return out;
}

/// Cholesky (symmetric) or partial-pivot LU (mixed) on G + eps Id with a
/// minimum-norm least-squares fallback. Throws SingularGramian when the
/// residual exceeds 1e-6 |y|.
inline Vec solve_gramian(const GramianMatrix& G, const Vec& y, double eps = 0.0) {
  GramianSolve s = solve_gramian_detailed(G, y, eps);
  if (s.residual > 1e-6 * y.norm()) {
    throw SingularGramian("Gramian solve residual " + std::to_string(s.residual) +
                              " exceeds 1e-6 |y|; the iterate has lost controllability",
                          s.residual);
  }
  return s.lambda;
}

/// 1/2 y^T lambda.
inline double energy_certificate(const GramianMatrix& G, const Vec& y, const Vec& lambda) {
  (void)G;
  return 0.5 * y.dot(lambda);
}

}  // namespace gramsynth
