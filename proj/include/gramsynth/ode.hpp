#pragma once

// Adaptive explicit Runge-Kutta integration with PID step-size control and
// dense output. Integration runs forward or backward in time.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gramsynth/detail/tableau.hpp"
#include "gramsynth/errors.hpp"

namespace gramsynth {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace ode {

/// Right-hand side y' = f(t, y), written into `dydt` (already sized).
using VectorField = std::function<void(double t, const Vec& y, Vec& dydt)>;

struct OdeProblem {
  VectorField field;
  double t_start = 0.0;
  double t_end = 1.0;
  Vec y0;

  void validate() const {
    if (!field) throw InvalidArgument("OdeProblem: vector field is empty");
    if (!(t_start != t_end)) throw InvalidArgument("OdeProblem: t_start must differ from t_end");
    if (!std::isfinite(t_start) || !std::isfinite(t_end))
      throw InvalidArgument("OdeProblem: non-finite time span");
    if (y0.size() == 0) throw InvalidArgument("OdeProblem: empty initial state");
  }
};

enum class Method { Dop853, Dopri5 };

inline std::string to_string(Method m) {
  return m == Method::Dop853 ? detail::Dop853Tableau::kName : detail::Dopri5Tableau::kName;
}

inline Method method_from_string(const std::string& s) {
  if (s == "dop853") return Method::Dop853;
  if (s == "dopri5") return Method::Dopri5;
  throw InvalidArgument("unknown integration method '" + s + "'");
}

/// Gains of the PID step-size controller. (0, 1, 0) is the classical
/// integral controller.
struct PidGains {
  double p = 0.0;
  double i = 1.0;
  double d = 0.0;
};

struct SolverConfig {
  double rtol = 1e-8;
  double atol = 1e-10;
  long max_steps = 200000;
  std::optional<double> initial_step;
  PidGains gains;
  double safety = 0.9;
  double max_growth = 10.0;
  double max_shrink = 0.2;
  Method method = Method::Dop853;

  void validate() const {
    if (!(rtol > 0.0)) throw InvalidArgument("SolverConfig: rtol must be > 0");
    if (!(atol > 0.0)) throw InvalidArgument("SolverConfig: atol must be > 0");
    if (max_steps < 1) throw InvalidArgument("SolverConfig: max_steps must be >= 1");
    if (initial_step && !(*initial_step > 0.0))
      throw InvalidArgument("SolverConfig: initial_step must be > 0");
    if (!(safety > 0.0 && safety <= 1.0))
      throw InvalidArgument("SolverConfig: safety factor must be in (0, 1]");
    if (!(max_growth >= 1.0) || !(max_shrink > 0.0 && max_shrink <= 1.0))
      throw InvalidArgument("SolverConfig: invalid step clamps");
  }
};

struct SolverStats {
  long accepted = 0;
  long rejected = 0;
  long evaluations = 0;
};

/// Order used by the step controller exponent 1/(order+1).
inline int controller_order(Method m) {
  return m == Method::Dop853 ? detail::Dop853Tableau::kControllerOrder
                             : detail::Dopri5Tableau::kControllerOrder;
}

/// Error norms of the most recent accepted steps (most recent first).
struct StepHistory {
  double previous = 1.0;
  double before_previous = 1.0;

  void push(double error_norm) {
    before_previous = previous;
    previous = std::max(error_norm, 1e-4);
  }
};

/// Next step size from the PID law
///   h * safety * e_n^(-b1/q1) * e_{n-1}^(-b2/q1) * e_{n-2}^(-b3/q1),
/// b1 = p+i+d, b2 = -(p+2d), b3 = d, q1 = order+1, with the growth factor
/// clamped to [max_shrink, max_growth].
inline double adapt_step(double error_norm, double h, const SolverConfig& config,
                         const StepHistory& history) {
  const double q1 = static_cast<double>(controller_order(config.method) + 1);
  if (!(error_norm > 0.0)) {
    return h * (std::isnan(error_norm) ? config.max_shrink : config.max_growth);
  }
  const auto& g = config.gains;
  const double b1 = g.p + g.i + g.d;
  const double b2 = -(g.p + 2.0 * g.d);
  const double b3 = g.d;
  double factor = config.safety * std::pow(error_norm, -b1 / q1);
  if (b2 != 0.0) factor *= std::pow(history.previous, -b2 / q1);
  if (b3 != 0.0) factor *= std::pow(history.before_previous, -b3 / q1);
  factor = std::clamp(factor, config.max_shrink, config.max_growth);
  return h * factor;
}

/// Continuous solution of an adaptive solve. Immutable once built; safe to
/// read from many threads.
class DenseSolution {
 public:
  DenseSolution() = default;

  double t_start() const { return times_.front(); }
  double t_end() const { return times_.back(); }
  Eigen::Index dim() const { return states_.front().size(); }
  std::size_t step_count() const { return coeffs_.size(); }
  const SolverStats& stats() const { return stats_; }
  const std::vector<double>& times() const { return times_; }
  const std::vector<Vec>& states() const { return states_; }
  const Vec& final_state() const { return states_.back(); }

  bool contains(double t) const {
    const double lo = std::min(t_start(), t_end());
    const double hi = std::max(t_start(), t_end());
    return t >= lo && t <= hi;
  }

  Vec eval(double t) const {
    Vec out(dim());
    eval_into(t, out);
    return out;
  }

  void eval_into(double t, Vec& out) const {
    if (!contains(t)) {
      throw OutOfSpan("DenseSolution: t=" + std::to_string(t) + " outside [" +
                      std::to_string(std::min(t_start(), t_end())) + ", " +
                      std::to_string(std::max(t_start(), t_end())) + "]");
    }
    const std::size_t i = segment_index(t);
    if (t == times_[i]) {
      out = states_[i];
      return;
    }
    if (t == times_[i + 1]) {
      out = states_[i + 1];
      return;
    }
    const double s = (t - times_[i]) / (times_[i + 1] - times_[i]);
    const double s1 = 1.0 - s;
    const Mat& r = coeffs_[i];
    const Eigen::Index m = r.cols();
    out = r.col(m - 1);
    for (Eigen::Index j = m - 1; j >= 1; --j) {
      out = r.col(j - 1) + ((j % 2 == 1) ? s : s1) * out;
    }
  }

 private:
  template <class Tableau>
  friend class Integrator;

  std::size_t segment_index(double t) const {
    const std::size_t n = coeffs_.size();
    std::size_t idx;
    if (times_.back() >= times_.front()) {
      auto it = std::upper_bound(times_.begin(), times_.end(), t);
      idx = static_cast<std::size_t>(std::distance(times_.begin(), it));
    } else {
      auto it = std::upper_bound(times_.begin(), times_.end(), t, std::greater<>());
      idx = static_cast<std::size_t>(std::distance(times_.begin(), it));
    }
    idx = idx == 0 ? 0 : idx - 1;
    return std::min(idx, n - 1);
  }

  std::vector<double> times_;
  std::vector<Vec> states_;
  std::vector<Mat> coeffs_;
  SolverStats stats_;
};

/// Endpoint of a solve that does not keep dense output.
struct Endpoint {
  Vec state;
  SolverStats stats;
};

/// Stepping engine for one tableau. Holds per-solve scratch buffers.
template <class Tableau>
class Integrator {
 public:
  static constexpr int S = Tableau::kStages;

  DenseSolution solve_dense(const OdeProblem& problem, const SolverConfig& config) {
    DenseSolution sol;
    sol.times_.push_back(problem.t_start);
    sol.states_.push_back(problem.y0);
    run(problem, config, [&](double t, double h, double t_new, const Vec& y, const Vec& y_new,
                             const Vec& fnew) {
      (void)t;
      Mat coeff;
      Tableau::dense(counting_field_, t, h, y, y_new, k_, fnew, work_, k14_, k15_, k16_, coeff);
      sol.times_.push_back(t_new);
      sol.states_.push_back(y_new);
      sol.coeffs_.push_back(std::move(coeff));
    });
    sol.stats_ = stats_;
    return sol;
  }

  Endpoint solve_endpoint(const OdeProblem& problem, const SolverConfig& config) {
    Vec last = problem.y0;
    run(problem, config,
        [&](double, double, double, const Vec&, const Vec& y_new, const Vec&) { last = y_new; });
    return {std::move(last), stats_};
  }

 private:
  template <class OnAccept>
  void run(const OdeProblem& problem, const SolverConfig& config, OnAccept&& on_accept) {
    problem.validate();
    config.validate();
    stats_ = {};
    const Eigen::Index n = problem.y0.size();
    const double dir = problem.t_end > problem.t_start ? 1.0 : -1.0;
    const double span = std::abs(problem.t_end - problem.t_start);
    const double h_min = 1e-14 * span;

    counting_field_ = [&](double t, const Vec& y, Vec& dy) {
      ++stats_.evaluations;
      problem.field(t, y, dy);
    };
    for (auto& k : k_) k.resize(n);
    work_.resize(n);
    k14_.resize(n);
    k15_.resize(n);
    k16_.resize(n);
    Vec y = problem.y0;
    Vec y_new(n), fnew(n), increment(n), scale(n);
    if (!y.allFinite()) throw NonFiniteState("initial state is not finite");

    double t = problem.t_start;
    Vec f0(n);
    counting_field_(t, y, f0);
    if (!f0.allFinite()) throw NonFiniteState("vector field is not finite at the initial state");

    double h = config.initial_step ? *config.initial_step : initial_step(problem, config, y, f0);
    h = std::clamp(h, h_min, span);

    StepHistory history;
    bool last_rejected = false;
    long attempts = 0;
    while (true) {
      if (++attempts > config.max_steps) {
        throw StepLimitExceeded("integration exceeded max_steps=" +
                                std::to_string(config.max_steps) + " at t=" + std::to_string(t));
      }
      const double remaining = std::abs(problem.t_end - t);
      bool last = false;
      if (h >= remaining || remaining - h < h_min) {
        h = remaining;
        last = true;
      }
      const double hs = dir * h;

      k_[0] = f0;
      for (int i = 1; i < S; ++i) {
        work_ = y;
        for (int j = 0; j < i; ++j) {
          const double aij = Tableau::a[i][j];
          if (aij != 0.0) work_.noalias() += (hs * aij) * k_[j];
        }
        counting_field_(t + Tableau::c[i] * hs, work_, k_[i]);
      }
      increment.setZero();
      for (int j = 0; j < S; ++j) {
        if (Tableau::b[j] != 0.0) increment.noalias() += Tableau::b[j] * k_[j];
      }
      y_new = y + hs * increment;
      scale = (config.atol + config.rtol * y.cwiseAbs().cwiseMax(y_new.cwiseAbs()).array()).matrix();
      const double err = Tableau::error_norm(k_, increment, scale, hs);

      if (!std::isfinite(err) || !y_new.allFinite()) {
        ++stats_.rejected;
        last_rejected = true;
        if (h <= h_min) {
          throw NonFiniteState("non-finite state near t=" + std::to_string(t) +
                               " (solution blow-up or invalid vector field)");
        }
        h = std::max(h * config.max_shrink, h_min);
        continue;
      }

      if (err <= 1.0) {
        const double t_new = last ? problem.t_end : t + hs;
        if constexpr (Tableau::kFsal) {
          fnew = k_[S - 1];
        } else {
          counting_field_(t_new, y_new, fnew);
        }
        if (!fnew.allFinite()) {
          throw NonFiniteState("vector field not finite at t=" + std::to_string(t_new));
        }
        on_accept(t, hs, t_new, y, y_new, fnew);
        ++stats_.accepted;
        if (last) break;
        double h_next = adapt_step(err, h, config, history);
        if (last_rejected) h_next = std::min(h_next, h);
        history.push(err);
        last_rejected = false;
        t = t_new;
        y.swap(y_new);
        f0 = fnew;
        h = std::max(h_next, h_min);
      } else {
        ++stats_.rejected;
        last_rejected = true;
        if (h <= h_min) {
          throw StepLimitExceeded("step size underflow at t=" + std::to_string(t));
        }
        h = std::max(adapt_step(err, h, config, history), h_min);
      }
    }
  }

  // Starting step heuristic (Hairer & Wanner, HINIT).
  double initial_step(const OdeProblem& problem, const SolverConfig& config, const Vec& y0,
                      const Vec& f0) {
    const double dir = problem.t_end > problem.t_start ? 1.0 : -1.0;
    const double span = std::abs(problem.t_end - problem.t_start);
    const Vec sk = (config.atol + config.rtol * y0.cwiseAbs().array()).matrix();
    const double dnf = (f0.array() / sk.array()).square().sum();
    const double dny = (y0.array() / sk.array()).square().sum();
    double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
    h = std::min(h, span);
    const Vec y1 = y0 + dir * h * f0;
    Vec f1(y0.size());
    counting_field_(problem.t_start + dir * h, y1, f1);
    double der2 = std::sqrt(((f1 - f0).array() / sk.array()).square().sum()) / h;
    if (!std::isfinite(der2)) der2 = 0.0;
    const double der12 = std::max(std::abs(der2), std::sqrt(dnf));
    const double order = static_cast<double>(Tableau::kControllerOrder + 1);
    const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 1.0 / order);
    return std::min({100.0 * h, h1, span});
  }

  std::function<void(double, const Vec&, Vec&)> counting_field_;
  std::array<Vec, S> k_;
  Vec work_, k14_, k15_, k16_;
  SolverStats stats_;
};

/// Adaptive solve returning the dense interpolant over the full span.
inline DenseSolution integrate(const OdeProblem& problem, const SolverConfig& config) {
  if (config.method == Method::Dop853) return Integrator<detail::Dop853Tableau>{}.solve_dense(problem, config);
  return Integrator<detail::Dopri5Tableau>{}.solve_dense(problem, config);
}

/// Same stepping as integrate() but keeps only the final state.
inline Endpoint propagate(const OdeProblem& problem, const SolverConfig& config) {
  if (config.method == Method::Dop853) return Integrator<detail::Dop853Tableau>{}.solve_endpoint(problem, config);
  return Integrator<detail::Dopri5Tableau>{}.solve_endpoint(problem, config);
}

inline Vec eval_dense(const DenseSolution& solution, double t) { return solution.eval(t); }

}  // namespace ode
}  // namespace gramsynth
