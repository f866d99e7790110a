#pragma once

// Open-loop controls u: [t0, T] -> R^k.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "gramsynth/errors.hpp"
#include "gramsynth/ode.hpp"

namespace gramsynth {

enum class ControlKind { Zero, ClosedForm, Synthesized };
enum class MapKind { General, MinimumEnergy };
enum class EvalStrategy { OnDemand, DenseInterpolant };

inline std::string to_string(MapKind m) {
  return m == MapKind::General ? "general" : "minimum_energy";
}
inline std::string to_string(EvalStrategy s) {
  return s == EvalStrategy::OnDemand ? "on_demand" : "dense_interpolant";
}
inline std::string to_string(ControlKind c) {
  switch (c) {
    case ControlKind::Zero: return "zero";
    case ControlKind::ClosedForm: return "closed_form";
    default: return "synthesized";
  }
}

/// Node j of the n-point uniform grid on [t0, T]; the last node is T exactly.
inline double grid_node(double t0, double T, Eigen::Index n, Eigen::Index j) {
  if (j == n - 1) return T;
  return t0 + (T - t0) * static_cast<double>(j) / static_cast<double>(n - 1);
}

/// Piecewise-cubic interpolant through samples on a uniform grid. Uses the
/// four nearest nodes (shifted inward at the ends), so it reproduces cubics
/// exactly and returns the stored samples at the nodes.
class UniformCubic {
 public:
  UniformCubic() = default;
  UniformCubic(double t0, double T, Mat samples) : t0_(t0), T_(T), values_(std::move(samples)) {
    if (values_.cols() < 2) throw InvalidArgument("UniformCubic: need at least 2 samples");
    if (!(T_ > t0_)) throw InvalidArgument("UniformCubic: need t0 < T");
  }

  Eigen::Index size() const { return values_.cols(); }
  const Mat& values() const { return values_; }
  double node(Eigen::Index j) const { return grid_node(t0_, T_, size(), j); }

  void eval_into(double t, Vec& out) const {
    const Eigen::Index m = size();
    const double h = (T_ - t0_) / static_cast<double>(m - 1);
    const double pos = (t - t0_) / h;
    Eigen::Index j = static_cast<Eigen::Index>(std::floor(pos));
    j = std::clamp<Eigen::Index>(j, 0, m - 2);
    if (t == node(j)) {
      out = values_.col(j);
      return;
    }
    if (t == node(j + 1)) {
      out = values_.col(j + 1);
      return;
    }
    if (m < 4) {
      const double s = pos - static_cast<double>(j);
      out = (1.0 - s) * values_.col(j) + s * values_.col(j + 1);
      return;
    }
    const Eigen::Index j0 = std::clamp<Eigen::Index>(j - 1, 0, m - 4);
    const double s = pos - static_cast<double>(j0);
    // Lagrange basis on nodes 0, 1, 2, 3 in units of h.
    const double l0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
    const double l1 = s * (s - 2.0) * (s - 3.0) / 2.0;
    const double l2 = -s * (s - 1.0) * (s - 3.0) / 2.0;
    const double l3 = s * (s - 1.0) * (s - 2.0) / 6.0;
    out = l0 * values_.col(j0) + l1 * values_.col(j0 + 1) + l2 * values_.col(j0 + 2) +
          l3 * values_.col(j0 + 3);
  }

 private:
  double t0_ = 0.0;
  double T_ = 1.0;
  Mat values_;
};

/// Metadata carried by a control produced by a synthesis map.
struct SynthesisData {
  Vec lambda;
  double tau = 0.0;
  MapKind map = MapKind::General;
  EvalStrategy strategy = EvalStrategy::OnDemand;
  /// Trajectory the map was linearized along.
  std::shared_ptr<const ode::DenseSolution> state;
  /// Grid size when strategy is DenseInterpolant, else 0.
  Eigen::Index grid_size = 0;
};

/// Immutable, cheaply copyable control. Safe to evaluate from many threads.
class ControlFunction {
 public:
  using Evaluator = std::function<void(double t, Vec& out)>;

  ControlFunction() = default;

  static ControlFunction zero(int k, double t0, double T) {
    ControlFunction c(ControlKind::Zero, k, t0, T);
    c.eval_ = std::make_shared<Evaluator>([k](double, Vec& out) { out.setZero(k); });
    return c;
  }

  static ControlFunction closed_form(int k, double t0, double T, Evaluator f) {
    if (!f) throw InvalidArgument("closed_form control needs an evaluator");
    ControlFunction c(ControlKind::ClosedForm, k, t0, T);
    c.eval_ = std::make_shared<Evaluator>(std::move(f));
    return c;
  }

  static ControlFunction synthesized(int k, double t0, double T, Evaluator f, SynthesisData data) {
    if (!f) throw InvalidArgument("synthesized control needs an evaluator");
    ControlFunction c(ControlKind::Synthesized, k, t0, T);
    c.eval_ = std::make_shared<Evaluator>(std::move(f));
    c.data_ = std::make_shared<const SynthesisData>(std::move(data));
    return c;
  }

  /// Control given by samples on a uniform grid over [t0, T].
  static ControlFunction from_grid(double t0, double T, Mat samples) {
    const int k = static_cast<int>(samples.rows());
    auto interp = std::make_shared<const UniformCubic>(t0, T, std::move(samples));
    return closed_form(k, t0, T, [interp](double t, Vec& out) { interp->eval_into(t, out); });
  }

  ControlKind kind() const { return kind_; }
  int k() const { return k_; }
  double t0() const { return t0_; }
  double T() const { return T_; }
  bool valid() const { return static_cast<bool>(eval_); }
  const SynthesisData* synthesis() const { return data_.get(); }

  void eval_into(double t, Vec& out) const {
    const double slack = 1e-12 * (T_ - t0_);
    if (t < t0_ - slack || t > T_ + slack) {
      throw OutOfSpan("control evaluated at t=" + std::to_string(t) + " outside [" +
                      std::to_string(t0_) + ", " + std::to_string(T_) + "]");
    }
    (*eval_)(std::clamp(t, t0_, T_), out);
  }

  Vec operator()(double t) const {
    Vec out(k_);
    eval_into(t, out);
    return out;
  }

  /// k x n matrix of values at the given times.
  Mat sample(const Vec& times) const {
    Mat out(k_, times.size());
    Vec v(k_);
    for (Eigen::Index i = 0; i < times.size(); ++i) {
      eval_into(times[i], v);
      out.col(i) = v;
    }
    return out;
  }

 private:
  ControlFunction(ControlKind kind, int k, double t0, double T)
      : kind_(kind), k_(k), t0_(t0), T_(T) {
    if (k < 1) throw InvalidArgument("control dimension must be >= 1");
    if (!(T > t0)) throw InvalidArgument("control span must satisfy t0 < T");
  }

  ControlKind kind_ = ControlKind::Zero;
  int k_ = 0;
  double t0_ = 0.0;
  double T_ = 1.0;
  std::shared_ptr<const Evaluator> eval_;
  std::shared_ptr<const SynthesisData> data_;
};

/// n uniform points including both ends.
inline Vec uniform_grid(double t0, double T, Eigen::Index n) {
  Vec g(n);
  for (Eigen::Index j = 0; j < n; ++j) g[j] = grid_node(t0, T, n, j);
  return g;
}

}  // namespace gramsynth
