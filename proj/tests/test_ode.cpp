#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "gramsynth/ode.hpp"

using namespace gramsynth;
using namespace gramsynth::ode;

namespace {

OdeProblem exponential(double t0 = 0.0, double t1 = 1.0) {
  return {[](double, const Vec& y, Vec& dy) { dy = y; }, t0, t1, Vec::Ones(1)};
}

OdeProblem oscillator() {
  return {[](double, const Vec& y, Vec& dy) {
            dy[0] = y[1];
            dy[1] = -y[0];
          },
          0.0, 2.0 * std::numbers::pi, (Vec(2) << 1.0, 0.0).finished()};
}

SolverConfig tight(double rtol = 1e-10, Method m = Method::Dop853) {
  SolverConfig c;
  c.rtol = rtol;
  c.atol = rtol * 1e-2;
  c.method = m;
  return c;
}

}  // namespace

TEST(Integrate, ZeroFieldIsExact) {
  OdeProblem p{[](double, const Vec&, Vec& dy) { dy.setZero(); }, 0.0, 1.0, (Vec(3) << 1, 2, 3).finished()};
  const auto sol = integrate(p, SolverConfig{});
  EXPECT_EQ(sol.final_state(), p.y0);
  EXPECT_EQ(sol.eval(0.37), p.y0);
}

TEST(Integrate, ExponentialEndpoint) {
  const auto sol = integrate(exponential(), tight());
  EXPECT_NEAR(sol.final_state()[0], std::exp(1.0), 1e-9);
}

TEST(Integrate, HarmonicOscillatorPeriod) {
  const auto c = tight(1e-9);
  const auto sol = integrate(oscillator(), c);
  EXPECT_NEAR(sol.final_state()[0], 1.0, 10 * c.rtol);
  EXPECT_NEAR(sol.final_state()[1], 0.0, 10 * c.rtol);
}

TEST(Integrate, Dopri5Alternative) {
  const auto sol = integrate(exponential(), tight(1e-10, Method::Dopri5));
  EXPECT_NEAR(sol.final_state()[0], std::exp(1.0), 1e-8);
  EXPECT_GT(sol.stats().accepted, integrate(exponential(), tight()).stats().accepted);
}

TEST(Integrate, BackwardIntegration) {
  const auto sol = integrate(exponential(1.0, 0.0), tight());
  EXPECT_NEAR(sol.final_state()[0], std::exp(-1.0), 1e-10);
  EXPECT_NEAR(sol.eval(0.5)[0], std::exp(-0.5), 1e-9);
}

TEST(Integrate, ForwardThenBackwardReturnsStart) {
  const SolverConfig c;
  auto p = oscillator();
  const Vec y1 = propagate(p, c).state;
  OdeProblem back{p.field, p.t_end, p.t_start, y1};
  const Vec y0 = propagate(back, c).state;
  EXPECT_LE((y0 - p.y0).norm(), 10 * (c.atol + c.rtol * p.y0.norm()));
}

TEST(Integrate, ToleranceProportionality) {
  double prev = 0.0;
  for (double rtol : {1e-6, 1e-8, 1e-10}) {
    const double err = std::abs(propagate(exponential(), tight(rtol)).state[0] - std::exp(1.0));
    if (prev > 0.0) EXPECT_LE(err, prev * 10.0 * 1e-2 + 1e-15);
    prev = err;
  }
}

TEST(Integrate, PropagateMatchesIntegrate) {
  const auto c = tight();
  EXPECT_EQ(propagate(oscillator(), c).state, integrate(oscillator(), c).final_state());
}

TEST(Integrate, Deterministic) {
  const auto a = integrate(oscillator(), SolverConfig{});
  const auto b = integrate(oscillator(), SolverConfig{});
  ASSERT_EQ(a.times(), b.times());
  for (double t : {0.1, 1.3, 4.9}) EXPECT_EQ(a.eval(t), b.eval(t));
}

TEST(Integrate, StepLimit) {
  SolverConfig c = tight();
  c.max_steps = 3;
  EXPECT_THROW(integrate(oscillator(), c), StepLimitExceeded);
}

TEST(Integrate, BlowUpIsNonFinite) {
  OdeProblem p{[](double, const Vec& y, Vec& dy) { dy = y.array().square(); }, 0.0, 2.0, Vec::Ones(1)};
  SolverConfig c;
  c.max_steps = 1000000;
  EXPECT_THROW(integrate(p, c), Error);
}

TEST(Integrate, RejectsMalformedProblems) {
  auto p = exponential();
  p.t_end = p.t_start;
  EXPECT_THROW(integrate(p, SolverConfig{}), InvalidArgument);
  SolverConfig c;
  c.rtol = 0.0;
  EXPECT_THROW(integrate(exponential(), c), InvalidArgument);
}

TEST(EvalDense, BoundaryIsExact) {
  const auto sol = integrate(exponential(), tight());
  EXPECT_EQ(eval_dense(sol, 0.0)[0], 1.0);
  EXPECT_EQ(eval_dense(sol, 1.0), sol.final_state());
}

TEST(EvalDense, Midpoint) {
  const auto sol = integrate(exponential(), tight());
  EXPECT_NEAR(eval_dense(sol, 0.5)[0], std::exp(0.5), 1e-8);
}

TEST(EvalDense, KnotsEqualDiscreteStates) {
  const auto sol = integrate(oscillator(), SolverConfig{});
  for (std::size_t i = 0; i < sol.times().size(); ++i) EXPECT_EQ(sol.eval(sol.times()[i]), sol.states()[i]);
}

TEST(EvalDense, UniformQueriesWithinHundredRtol) {
  for (Method m : {Method::Dop853, Method::Dopri5}) {
    const auto c = tight(1e-8, m);
    const auto sol = integrate(exponential(), c);
    double worst = 0.0;
    for (int i = 0; i <= 100; ++i) {
      const double t = i / 100.0;
      worst = std::max(worst, std::abs(sol.eval(t)[0] - std::exp(t)));
    }
    EXPECT_LE(worst, 100 * c.rtol) << to_string(m);
  }
}

TEST(EvalDense, ContinuousAcrossSegments) {
  const auto sol = integrate(oscillator(), SolverConfig{});
  for (std::size_t i = 1; i + 1 < sol.times().size(); ++i) {
    const double t = sol.times()[i];
    const double eps = 1e-12;
    EXPECT_LE((sol.eval(t - eps) - sol.eval(t + eps)).norm(), 1e-9);
  }
}

TEST(EvalDense, OutOfSpanThrows) {
  const auto sol = integrate(exponential(), tight());
  EXPECT_THROW(sol.eval(1.0 + 1e-9), OutOfSpan);
  EXPECT_THROW(sol.eval(-0.1), OutOfSpan);
}

TEST(AdaptStep, UnitErrorGivesSafetyFactor) {
  SolverConfig c;
  EXPECT_DOUBLE_EQ(adapt_step(1.0, 0.1, c, {}), 0.1 * c.safety);
}

TEST(AdaptStep, PowerOfOrderHalvesStep) {
  SolverConfig c;
  const double q1 = controller_order(c.method) + 1;
  EXPECT_NEAR(adapt_step(std::pow(2.0, q1), 0.1, c, {}), 0.1 * c.safety / 2.0, 1e-15);
  c.method = Method::Dopri5;
  const double q2 = controller_order(c.method) + 1;
  EXPECT_NEAR(adapt_step(std::pow(2.0, q2), 0.1, c, {}), 0.1 * c.safety / 2.0, 1e-15);
}

TEST(AdaptStep, ClampsGrowthAndShrink) {
  SolverConfig c;
  EXPECT_DOUBLE_EQ(adapt_step(0.0, 0.1, c, {}), 0.1 * c.max_growth);
  EXPECT_DOUBLE_EQ(adapt_step(1e-30, 0.1, c, {}), 0.1 * c.max_growth);
  EXPECT_DOUBLE_EQ(adapt_step(1e30, 0.1, c, {}), 0.1 * c.max_shrink);
}

TEST(AdaptStep, PidGainsUseHistory) {
  SolverConfig c;
  c.gains = {0.1, 0.7, 0.05};
  StepHistory h;
  h.push(0.5);
  h.push(0.25);
  const double q1 = controller_order(c.method) + 1;
  const double expected = 0.1 * c.safety * std::pow(0.8, -(0.85) / q1) * std::pow(0.25, (0.2) / q1) *
                          std::pow(0.5, -(0.05) / q1);
  EXPECT_NEAR(adapt_step(0.8, 0.1, c, h), expected, 1e-15);
}
