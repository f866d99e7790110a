#pragma once

// Control-affine systems x' = N_t(x) + B_t(x) u and the benchmark catalog.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "gramsynth/errors.hpp"
#include "gramsynth/ode.hpp"

namespace gramsynth {

using FieldFn = std::function<void(double t, const Vec& x, Vec& out)>;
using MatrixFn = std::function<void(double t, const Vec& x, Mat& out)>;
/// out = D_x[B_t(x) u], a d x d matrix.
using InputJacobianFn = std::function<void(double t, const Vec& x, const Vec& u, Mat& out)>;

class ControlAffineSystem {
 public:
  std::string name;
  int d = 0;
  int k = 0;
  FieldFn drift;
  MatrixFn input;
  MatrixFn drift_jacobian;
  /// Empty when B does not depend on x.
  InputJacobianFn input_jacobian;

  bool state_dependent_input() const { return static_cast<bool>(input_jacobian); }

  void validate() const {
    if (d < 1 || k < 1 || k > d) throw InvalidArgument("system '" + name + "': need 1 <= k <= d");
    if (!drift || !input || !drift_jacobian)
      throw InvalidArgument("system '" + name + "': drift, input and drift_jacobian are required");
  }

  Vec drift_at(double t, const Vec& x) const {
    Vec out(d);
    drift(t, x, out);
    return out;
  }

  Mat input_at(double t, const Vec& x) const {
    Mat out(d, k);
    input(t, x, out);
    return out;
  }

  Mat drift_jacobian_at(double t, const Vec& x) const {
    Mat out(d, d);
    drift_jacobian(t, x, out);
    return out;
  }

  /// D_x[N_t(x) + B_t(x) u].
  Mat closed_loop_jacobian(double t, const Vec& x, const Vec& u) const {
    Mat out(d, d);
    closed_loop_jacobian_into(t, x, u, out, scratch_for(d));
    return out;
  }

  void closed_loop_jacobian_into(double t, const Vec& x, const Vec& u, Mat& out,
                                 Mat& scratch) const {
    drift_jacobian(t, x, out);
    if (input_jacobian) {
      scratch.resize(d, d);
      input_jacobian(t, x, u, scratch);
      out += scratch;
    }
  }

  /// Right-hand side of the controlled system.
  void controlled_field(double t, const Vec& x, const Vec& u, Vec& out, Mat& b_scratch) const {
    drift(t, x, out);
    b_scratch.resize(d, k);
    input(t, x, b_scratch);
    out.noalias() += b_scratch * u;
  }

 private:
  static Mat& scratch_for(int d) {
    thread_local Mat m;
    m.resize(d, d);
    return m;
  }
};

using SystemPtr = std::shared_ptr<const ControlAffineSystem>;

enum class Anchor { Initial = 1, Final = 2 };

struct SteeringProblem {
  SystemPtr system;
  Vec x0;
  Vec x1;
  double t0 = 0.0;
  double T = 1.0;
  Anchor anchor = Anchor::Final;

  double tau() const { return anchor == Anchor::Initial ? t0 : T; }
  int d() const { return system->d; }
  int k() const { return system->k; }

  void validate() const {
    if (!system) throw InvalidArgument("SteeringProblem: no system");
    system->validate();
    if (!(t0 < T)) throw InvalidArgument("SteeringProblem: need t0 < T");
    if (x0.size() != system->d || x1.size() != system->d)
      throw InvalidArgument("SteeringProblem: boundary states must have dimension d");
    if (!x0.allFinite() || !x1.allFinite())
      throw InvalidArgument("SteeringProblem: boundary states must be finite");
  }
};

/// Central-difference Jacobian of f at (t, x).
inline Mat jacobian_fd(const FieldFn& f, double t, const Vec& x, double h) {
  if (!(h > 0.0)) throw InvalidArgument("jacobian_fd: step must be > 0");
  Vec fp, fm;
  Vec probe = x;
  Vec f0(x.size());
  f(t, x, f0);
  Mat J(f0.size(), x.size());
  fp.resize(f0.size());
  fm.resize(f0.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double hi = x[j] + h;
    const double lo = x[j] - h;
    probe[j] = hi;
    f(t, probe, fp);
    probe[j] = lo;
    f(t, probe, fm);
    probe[j] = x[j];
    J.col(j) = (fp - fm) / (hi - lo);
  }
  if (!J.allFinite()) throw NonFiniteValue("jacobian_fd: non-finite derivative");
  return J;
}

/// Phi_{s,t}(x): the drift-only flow from time s to time t.
inline Vec drift_flow(const ControlAffineSystem& system, double s, double t, const Vec& x,
                      const ode::SolverConfig& config) {
  if (!x.allFinite()) throw InvalidArgument("drift_flow: state is not finite");
  if (s == t) return x;
  ode::OdeProblem p{system.drift, s, t, x};
  return ode::propagate(p, config).state;
}

/// x' = A x + B u.
inline SystemPtr linear_system(const Mat& A, const Mat& B, std::string name = "lti") {
  if (A.rows() != A.cols() || B.rows() != A.rows())
    throw InvalidArgument("linear_system: shape mismatch");
  auto s = std::make_shared<ControlAffineSystem>();
  s->name = std::move(name);
  s->d = static_cast<int>(A.rows());
  s->k = static_cast<int>(B.cols());
  s->drift = [A](double, const Vec& x, Vec& out) { out.noalias() = A * x; };
  s->input = [B](double, const Vec&, Mat& out) { out = B; };
  s->drift_jacobian = [A](double, const Vec&, Mat& out) { out = A; };
  return s;
}

/// Random stable LTI pair: A = Q diag(-a) Q^T + skew part with a in [0.5, 1.5],
/// B with standard normal entries.
inline std::pair<Mat, Mat> random_stable_lti(int d, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  Mat G(d, d), S(d, d), B(d, k);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) G(i, j) = normal(rng);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) S(i, j) = normal(rng);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < k; ++j) B(i, j) = normal(rng);
  Eigen::HouseholderQR<Mat> qr(G);
  const Mat Q = qr.householderQ();
  Vec a(d);
  for (int i = 0; i < d; ++i) a[i] = unif(rng);
  const Mat A = -Q * a.asDiagonal() * Q.transpose() + 0.5 * (S - S.transpose());
  return {A, B};
}

/// Optional overrides for make_benchmark.
struct BenchmarkParams {
  std::optional<double> t0;
  std::optional<double> T;
  std::optional<Vec> x0;
  std::optional<Vec> x1;
  Anchor anchor = Anchor::Final;

  // mindy_like only.
  int d = 8;
  int k = 8;
  std::uint64_t seed = 0;
  double alpha = 6.648308055437865;  // sqrt(beta^2 - 1/4): unit slope at the origin
  double beta = 20.0 / 3.0;
  double spectral_radius = 0.9;
  double target_box = 0.5;
};

namespace detail {

inline SystemPtr unicycle_system() {
  auto s = std::make_shared<ControlAffineSystem>();
  s->name = "unicycle";
  s->d = 3;
  s->k = 2;
  s->drift = [](double, const Vec&, Vec& out) { out.setZero(3); };
  s->input = [](double, const Vec& x, Mat& out) {
    out.setZero(3, 2);
    out(0, 0) = std::cos(x[2]);
    out(1, 0) = std::sin(x[2]);
    out(2, 1) = 1.0;
  };
  s->drift_jacobian = [](double, const Vec&, Mat& out) { out.setZero(3, 3); };
  s->input_jacobian = [](double, const Vec& x, const Vec& u, Mat& out) {
    out.setZero(3, 3);
    out(0, 2) = -std::sin(x[2]) * u[0];
    out(1, 2) = std::cos(x[2]) * u[0];
  };
  return s;
}

inline SystemPtr pendulum_system() {
  constexpr double lam = 0.78;
  constexpr double beta = 0.13;
  auto b = [](double t) { return 1.0 / ((1.0 + 0.5 * std::cos(t)) * (1.0 + 0.5 * std::cos(t))); };
  auto a = [b](double t) { return lam * lam * std::sqrt(b(t)); };
  auto gamma = [b](double t) { return -b(t) * std::sin(t) + beta * lam; };
  auto s = std::make_shared<ControlAffineSystem>();
  s->name = "pendulum";
  s->d = 2;
  s->k = 1;
  s->drift = [a, gamma](double t, const Vec& x, Vec& out) {
    out.resize(2);
    out[0] = x[1];
    out[1] = -a(t) * std::sin(x[0]) - gamma(t) * x[1];
  };
  s->input = [b](double t, const Vec&, Mat& out) {
    out.resize(2, 1);
    out(0, 0) = 0.0;
    out(1, 0) = b(t);
  };
  s->drift_jacobian = [a, gamma](double t, const Vec& x, Mat& out) {
    out.resize(2, 2);
    out << 0.0, 1.0, -a(t) * std::cos(x[0]), -gamma(t);
  };
  return s;
}

inline SystemPtr sir_system() {
  constexpr double lam = 1.0, beta = 2.0, mu = 0.2, recovery = 1.0;
  auto s = std::make_shared<ControlAffineSystem>();
  s->name = "sir";
  s->d = 3;
  s->k = 1;
  s->drift = [=](double, const Vec& x, Vec& out) {
    out.resize(3);
    out[0] = lam - beta * x[0] * x[1] - mu * x[0];
    out[1] = beta * x[0] * x[1] - (mu + recovery) * x[1];
    out[2] = recovery * x[1] - mu * x[2];
  };
  s->input = [](double, const Vec& x, Mat& out) {
    out.setZero(3, 1);
    out(0, 0) = -x[0];
  };
  s->drift_jacobian = [=](double, const Vec& x, Mat& out) {
    out.resize(3, 3);
    out << -beta * x[1] - mu, -beta * x[0], 0.0,
           beta * x[1], beta * x[0] - mu - recovery, 0.0,
           0.0, recovery, -mu;
  };
  s->input_jacobian = [](double, const Vec&, const Vec& u, Mat& out) {
    out.setZero(3, 3);
    out(0, 0) = -u[0];
  };
  return s;
}

// 3-2-1 Euler angles (phi, theta, psi) and body rates (p, q, r).
inline SystemPtr spacecraft_system() {
  const Eigen::Vector3d J(10.0, 20.0, 15.0);
  auto s = std::make_shared<ControlAffineSystem>();
  s->name = "spacecraft";
  s->d = 6;
  s->k = 3;
  s->drift = [J](double, const Vec& x, Vec& out) {
    out.resize(6);
    const double ph = x[0], th = x[1];
    const double p = x[3], q = x[4], r = x[5];
    const double sq = q * std::sin(ph) + r * std::cos(ph);
    out[0] = p + sq * std::tan(th);
    out[1] = q * std::cos(ph) - r * std::sin(ph);
    out[2] = sq / std::cos(th);
    out[3] = (J[1] - J[2]) / J[0] * q * r;
    out[4] = (J[2] - J[0]) / J[1] * r * p;
    out[5] = (J[0] - J[1]) / J[2] * p * q;
  };
  s->input = [J](double, const Vec&, Mat& out) {
    out.setZero(6, 3);
    for (int i = 0; i < 3; ++i) out(3 + i, i) = 1.0 / J[i];
  };
  s->drift_jacobian = [J](double, const Vec& x, Mat& out) {
    out.setZero(6, 6);
    const double ph = x[0], th = x[1];
    const double p = x[3], q = x[4], r = x[5];
    const double sp = std::sin(ph), cp = std::cos(ph);
    const double tt = std::tan(th), ct = std::cos(th), st = std::sin(th);
    const double sq = q * sp + r * cp;
    const double cq = q * cp - r * sp;
    out(0, 0) = cq * tt;
    out(0, 1) = sq / (ct * ct);
    out(0, 3) = 1.0;
    out(0, 4) = sp * tt;
    out(0, 5) = cp * tt;
    out(1, 0) = -sq;
    out(1, 4) = cp;
    out(1, 5) = -sp;
    out(2, 0) = cq / ct;
    out(2, 1) = sq * st / (ct * ct);
    out(2, 4) = sp / ct;
    out(2, 5) = cp / ct;
    const double c1 = (J[1] - J[2]) / J[0];
    const double c2 = (J[2] - J[0]) / J[1];
    const double c3 = (J[0] - J[1]) / J[2];
    out(3, 4) = c1 * r;
    out(3, 5) = c1 * q;
    out(4, 3) = c2 * r;
    out(4, 5) = c2 * p;
    out(5, 3) = c3 * q;
    out(5, 4) = c3 * p;
  };
  return s;
}

inline SystemPtr hopfield_system(bool full) {
  Mat W(2, 2);
  W << 0.5, -1.5, 1.5, -0.5;
  const Eigen::Vector2d decay(0.5, 0.3);
  Mat B = Mat::Identity(2, 2);
  if (!full) B = (Mat(2, 1) << 1.0, 0.5).finished();
  auto s = std::make_shared<ControlAffineSystem>();
  s->name = full ? "hopfield2d_full" : "hopfield2d_under";
  s->d = 2;
  s->k = full ? 2 : 1;
  s->drift = [W, decay](double, const Vec& x, Vec& out) {
    out = -decay.cwiseProduct(x) + W * x.array().tanh().matrix();
  };
  s->input = [B](double, const Vec&, Mat& out) { out = B; };
  s->drift_jacobian = [W, decay](double, const Vec& x, Mat& out) {
    const Eigen::Array2d th = x.array().tanh();
    const Eigen::Array2d sech2 = 1.0 - th * th;
    out = W * sech2.matrix().asDiagonal();
    out.diagonal() -= decay;
  };
  return s;
}

// Hopfield-type network N(x) = -D x + W psi(x),
// psi(x) = sqrt(alpha^2 + (beta x + 1/2)^2) - sqrt(alpha^2 + (beta x - 1/2)^2).
struct MindyParams {
  Mat W;
  Vec decay;
  double alpha;
  double beta;
};

inline MindyParams mindy_params(const BenchmarkParams& p, std::mt19937_64& rng) {
  const int d = p.d;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.3, 0.7);
  Mat W(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) W(i, j) = normal(rng);
  const double rho = Eigen::EigenSolver<Mat>(W, false).eigenvalues().cwiseAbs().maxCoeff();
  W *= p.spectral_radius / rho;
  Vec decay(d);
  for (int i = 0; i < d; ++i) decay[i] = unif(rng);
  return {W, decay, p.alpha, p.beta};
}

inline SystemPtr mindy_system(const MindyParams& mp, int k) {
  const int d = static_cast<int>(mp.decay.size());
  auto s = std::make_shared<ControlAffineSystem>();
  s->name = "mindy_like";
  s->d = d;
  s->k = k;
  const double a2 = mp.alpha * mp.alpha;
  const double beta = mp.beta;
  s->drift = [mp, a2, beta](double, const Vec& x, Vec& out) {
    const Eigen::ArrayXd bx = beta * x.array();
    const Eigen::ArrayXd psi = (a2 + (bx + 0.5).square()).sqrt() - (a2 + (bx - 0.5).square()).sqrt();
    out.noalias() = mp.W * psi.matrix();
    out.array() -= mp.decay.array() * x.array();
  };
  s->input = [d, k](double, const Vec&, Mat& out) { out = Mat::Identity(d, k); };
  s->drift_jacobian = [mp, a2, beta](double, const Vec& x, Mat& out) {
    const Eigen::ArrayXd bx = beta * x.array();
    const Eigen::ArrayXd dpsi =
        beta * ((bx + 0.5) / (a2 + (bx + 0.5).square()).sqrt() -
                (bx - 0.5) / (a2 + (bx - 0.5).square()).sqrt());
    out.noalias() = mp.W * dpsi.matrix().asDiagonal();
    out.diagonal() -= mp.decay;
  };
  return s;
}

}  // namespace detail

inline const std::vector<std::string>& benchmark_names() {
  static const std::vector<std::string> names = {"unicycle",   "pendulum",        "sir",
                                                 "spacecraft", "hopfield2d_full", "hopfield2d_under",
                                                 "mindy_like"};
  return names;
}

/// Builds a catalog system with its default boundary data, then applies the
/// overrides in `params`.
inline SteeringProblem make_benchmark(const std::string& name, const BenchmarkParams& params = {}) {
  using std::numbers::pi;
  SteeringProblem prob;
  if (name == "unicycle") {
    prob.system = detail::unicycle_system();
    prob.x0 = (Vec(3) << 0.5, 0.25, pi / 12.0).finished();
    prob.x1 = (Vec(3) << 1.0, 0.75, 4.0 * pi / 3.0).finished();
    prob.t0 = 0.0;
    prob.T = 2.0;
  } else if (name == "pendulum") {
    prob.system = detail::pendulum_system();
    prob.x0 = Vec::Zero(2);
    prob.x1 = (Vec(2) << pi, 0.0).finished();
    prob.t0 = 0.5;
    prob.T = 1.5;
  } else if (name == "sir") {
    prob.system = detail::sir_system();
    prob.x0 = (Vec(3) << 1.0, 0.2, 0.1).finished();
    prob.x1 = (Vec(3) << 0.5, 0.25, 0.2).finished();
    prob.t0 = 0.0;
    prob.T = 0.5;
  } else if (name == "spacecraft") {
    prob.system = detail::spacecraft_system();
    prob.x0 = (Vec(6) << 0.3, 0.2, 0.1, 0.0, 0.0, 0.0).finished();
    prob.x1 = Vec::Zero(6);
    prob.t0 = 0.0;
    prob.T = 5.0;
  } else if (name == "hopfield2d_full" || name == "hopfield2d_under") {
    prob.system = detail::hopfield_system(name == "hopfield2d_full");
    prob.x0 = Vec::Ones(2);
    prob.x1 = -Vec::Ones(2);
    prob.t0 = 0.0;
    prob.T = 1.5;
  } else if (name == "mindy_like") {
    if (params.d < 1 || params.k < 1 || params.k > params.d)
      throw InvalidArgument("mindy_like: need 1 <= k <= d");
    std::mt19937_64 rng(params.seed);
    const auto mp = detail::mindy_params(params, rng);
    prob.system = detail::mindy_system(mp, params.k);
    prob.x0 = Vec::Zero(params.d);
    std::uniform_real_distribution<double> box(-params.target_box, params.target_box);
    prob.x1.resize(params.d);
    for (int i = 0; i < params.d; ++i) prob.x1[i] = box(rng);
    prob.t0 = 0.0;
    prob.T = 3.0;
  } else {
    throw UnknownSystem("unknown benchmark system '" + name + "'");
  }
  if (params.t0) prob.t0 = *params.t0;
  if (params.T) prob.T = *params.T;
  if (params.x0) prob.x0 = *params.x0;
  if (params.x1) prob.x1 = *params.x1;
  prob.anchor = params.anchor;
  prob.validate();
  return prob;
}

}  // namespace gramsynth
