#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "gramsynth/systems.hpp"
#include "oracles.hpp"

using namespace gramsynth;
using std::numbers::pi;

namespace {

Vec random_state(std::mt19937_64& rng, int d, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vec x(d);
  for (int i = 0; i < d; ++i) x[i] = u(rng);
  return x;
}

SteeringProblem catalog(const std::string& name) {
  BenchmarkParams p;
  if (name == "mindy_like") {
    p.d = 6;
    p.k = 3;
    p.seed = 11;
  }
  return make_benchmark(name, p);
}

}  // namespace

TEST(JacobianFd, Identity) {
  const FieldFn f = [](double, const Vec& x, Vec& out) { out = x; };
  const Vec x = (Vec(3) << 0.3, -1.2, 4.0).finished();
  EXPECT_LE((jacobian_fd(f, 0.0, x, 1e-6) - Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(JacobianFd, Linear) {
  Mat A(3, 3);
  A << 1, 2, 3, -4, 5, -6, 0.5, 0, 7;
  const FieldFn f = [A](double, const Vec& x, Vec& out) { out = A * x; };
  EXPECT_LE((jacobian_fd(f, 0.0, Vec::Ones(3), 1e-5) - A).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(JacobianFd, PendulumAtQuarterTurn) {
  const auto sys = catalog("pendulum").system;
  const Vec x = (Vec(2) << pi / 2, 0.0).finished();
  const Mat fd = jacobian_fd(sys->drift, 0.0, x, 1e-6);
  EXPECT_LE((fd - sys->drift_jacobian_at(0.0, x)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(JacobianFd, RejectsNonPositiveStep) {
  const FieldFn f = [](double, const Vec& x, Vec& out) { out = x; };
  EXPECT_THROW(jacobian_fd(f, 0.0, Vec::Ones(2), 0.0), InvalidArgument);
}

class CatalogJacobians : public ::testing::TestWithParam<std::string> {};

TEST_P(CatalogJacobians, DriftJacobianMatchesFiniteDifferences) {
  const auto prob = catalog(GetParam());
  const auto& sys = *prob.system;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> times(prob.t0, prob.T);
  for (int probe = 0; probe < 20; ++probe) {
    const Vec x = prob.x0 + random_state(rng, sys.d, 0.5);
    const double t = times(rng);
    const Mat J = sys.drift_jacobian_at(t, x);
    const Mat fd = jacobian_fd(sys.drift, t, x, 1e-6);
    EXPECT_LE((J - fd).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, J.cwiseAbs().maxCoeff()))
        << sys.name << " probe " << probe;
  }
}

TEST_P(CatalogJacobians, ClosedLoopJacobianMatchesFiniteDifferences) {
  const auto prob = catalog(GetParam());
  const auto& sys = *prob.system;
  std::mt19937_64 rng(9);
  for (int probe = 0; probe < 20; ++probe) {
    const Vec x = prob.x0 + random_state(rng, sys.d, 0.5);
    const Vec u = random_state(rng, sys.k, 2.0);
    const double t = prob.t0 + 0.37 * (prob.T - prob.t0);
    const FieldFn f = [&](double s, const Vec& z, Vec& out) {
      Mat b;
      sys.controlled_field(s, z, u, out, b);
    };
    const Mat J = sys.closed_loop_jacobian(t, x, u);
    EXPECT_LE((J - jacobian_fd(f, t, x, 1e-6)).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, J.cwiseAbs().maxCoeff()))
        << sys.name;
  }
}

INSTANTIATE_TEST_SUITE_P(All, CatalogJacobians, ::testing::ValuesIn(benchmark_names()));

TEST(Catalog, Names) {
  EXPECT_EQ(benchmark_names().size(), 7u);
  EXPECT_THROW(make_benchmark("bicycle"), UnknownSystem);
}

TEST(Catalog, Unicycle) {
  const auto p = make_benchmark("unicycle");
  EXPECT_EQ(p.d(), 3);
  EXPECT_EQ(p.k(), 2);
  EXPECT_EQ(p.x0, (Vec(3) << 0.5, 0.25, pi / 12).finished());
  EXPECT_EQ(p.x1, (Vec(3) << 1.0, 0.75, 4 * pi / 3).finished());
  EXPECT_EQ(p.t0, 0.0);
  EXPECT_EQ(p.T, 2.0);
  EXPECT_EQ(p.system->drift_at(0.0, p.x0), Vec::Zero(3));
}

TEST(Catalog, Sir) {
  const auto p = make_benchmark("sir");
  EXPECT_EQ(p.d(), 3);
  EXPECT_EQ(p.k(), 1);
  EXPECT_EQ(p.x0, (Vec(3) << 1.0, 0.2, 0.1).finished());
  EXPECT_EQ(p.x1, (Vec(3) << 0.5, 0.25, 0.2).finished());
  EXPECT_EQ(p.T, 0.5);
  const Vec f = p.system->drift_at(0.0, p.x0);
  EXPECT_NEAR(f[0], 0.4, 1e-15);
  EXPECT_NEAR(f[1], 0.16, 1e-15);
  EXPECT_NEAR(f[2], 0.18, 1e-15);
  EXPECT_EQ(p.system->input_at(0.0, p.x0), (Mat(3, 1) << -1.0, 0.0, 0.0).finished());
}

TEST(Catalog, SirClosedLoopDiffersFromDrift) {
  const auto p = make_benchmark("sir");
  const Vec u = Vec::Constant(1, 0.7);
  const Mat diff = p.system->closed_loop_jacobian(0.0, p.x0, u) - p.system->drift_jacobian_at(0.0, p.x0);
  EXPECT_DOUBLE_EQ(diff(0, 0), -0.7);
  EXPECT_DOUBLE_EQ(diff.cwiseAbs().sum(), 0.7);
}

TEST(Catalog, Hopfield) {
  const auto full = make_benchmark("hopfield2d_full");
  EXPECT_EQ(full.system->input_at(0.0, full.x0), Mat::Identity(2, 2));
  EXPECT_EQ(full.x0, Vec::Ones(2));
  EXPECT_EQ(full.x1, -Vec::Ones(2));
  EXPECT_EQ(full.T, 1.5);
  const auto under = make_benchmark("hopfield2d_under");
  EXPECT_EQ(under.k(), 1);
  EXPECT_EQ(under.system->drift_at(0.3, under.x0), full.system->drift_at(0.3, full.x0));
}

TEST(Catalog, Spacecraft) {
  const auto p = make_benchmark("spacecraft");
  EXPECT_EQ(p.d(), 6);
  EXPECT_EQ(p.k(), 3);
  const Mat B = p.system->input_at(0.0, p.x0);
  EXPECT_DOUBLE_EQ(B(3, 0), 0.1);
  EXPECT_DOUBLE_EQ(B(4, 1), 0.05);
  EXPECT_DOUBLE_EQ(B(5, 2), 1.0 / 15.0);
  EXPECT_EQ(B.topRows(3), Mat::Zero(3, 3));
  // At rest the attitude does not move.
  EXPECT_EQ(p.system->drift_at(0.0, p.x0), Vec::Zero(6));
}

TEST(Catalog, MindyUnitSlopeAtOrigin) {
  BenchmarkParams bp;
  bp.d = 5;
  bp.k = 2;
  bp.seed = 4;
  const auto p = make_benchmark("mindy_like", bp);
  EXPECT_EQ(p.x0, Vec::Zero(5));
  EXPECT_LE(p.x1.cwiseAbs().maxCoeff(), bp.target_box);
  EXPECT_LE(p.system->drift_at(0.0, Vec::Zero(5)).norm(), 1e-15);
  EXPECT_EQ(p.system->input_at(0.0, p.x0), Mat::Identity(5, 2));
  const auto again = make_benchmark("mindy_like", bp);
  EXPECT_EQ(p.x1, again.x1);
  EXPECT_EQ(p.system->drift_jacobian_at(0.0, p.x1), again.system->drift_jacobian_at(0.0, p.x1));
  bp.k = 6;
  EXPECT_THROW(make_benchmark("mindy_like", bp), InvalidArgument);
}

TEST(Catalog, Overrides) {
  BenchmarkParams bp;
  bp.T = 3.0;
  bp.x1 = Vec::Zero(3);
  bp.anchor = Anchor::Initial;
  const auto p = make_benchmark("unicycle", bp);
  EXPECT_EQ(p.T, 3.0);
  EXPECT_EQ(p.x1, Vec::Zero(3));
  EXPECT_EQ(p.tau(), 0.0);
  bp.T = -1.0;
  EXPECT_THROW(make_benchmark("unicycle", bp), InvalidArgument);
}

TEST(RandomStableLti, IsStableAndSeeded) {
  const auto [A, B] = random_stable_lti(6, 2, 3);
  EXPECT_LT(Eigen::EigenSolver<Mat>(A).eigenvalues().real().maxCoeff(), 0.0);
  EXPECT_EQ(B.rows(), 6);
  EXPECT_EQ(B.cols(), 2);
  EXPECT_EQ(random_stable_lti(6, 2, 3).first, A);
  EXPECT_NE(random_stable_lti(6, 2, 4).first, A);
}

TEST(DriftFlow, MatchesMatrixExponential) {
  const auto [A, B] = random_stable_lti(4, 2, 1);
  const auto sys = linear_system(A, B);
  const Vec x = (Vec(4) << 1, -2, 0.5, 3).finished();
  ode::SolverConfig c;
  c.rtol = 1e-11;
  c.atol = 1e-13;
  for (double t : {0.7, -0.4}) {
    EXPECT_LE((drift_flow(*sys, 0.0, t, x, c) - oracle::expm(A, t) * x).norm(), 1e-9);
  }
  EXPECT_EQ(drift_flow(*sys, 0.3, 0.3, x, c), x);
}

TEST(DriftFlow, Semigroup) {
  const auto p = make_benchmark("pendulum");
  ode::SolverConfig c;
  c.rtol = 1e-11;
  c.atol = 1e-13;
  const Vec x = (Vec(2) << 0.4, -0.2).finished();
  const Vec direct = drift_flow(*p.system, 0.2, 1.7, x, c);
  const Vec composed = drift_flow(*p.system, 0.9, 1.7, drift_flow(*p.system, 0.2, 0.9, x, c), c);
  EXPECT_LE((direct - composed).norm(), 1e-9);
  const Vec back = drift_flow(*p.system, 1.7, 0.2, direct, c);
  EXPECT_LE((back - x).norm(), 1e-9);
}

TEST(SteeringProblem, Validation) {
  auto p = make_benchmark("unicycle");
  p.x1 = Vec::Zero(2);
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = make_benchmark("unicycle");
  p.x0[0] = std::nan("");
  EXPECT_THROW(p.validate(), InvalidArgument);
}
