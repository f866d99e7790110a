#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "gramsynth/harness.hpp"

using namespace gramsynth;
using namespace gramsynth::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gramsynth_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig quick_config(const std::string& system, const fs::path& dir) {
  json j = {{"system", {{"name", system}}},
            {"synthesis", {{"N_max", 3}, {"K", 101}}},
            {"output", {{"dir", dir.string()}, {"samples", 51}}}};
  return parse_config(j);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Numbers, NonFiniteRoundTrip) {
  for (double v : {1.5, -0.0, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()})
    EXPECT_EQ(num_from(num(v)), v);
  EXPECT_TRUE(std::isnan(num_from(num(std::nan("")))));
  EXPECT_THROW(num_from(json("many")), ConfigError);
  EXPECT_EQ(std::stod(fmt(0.1)), 0.1);
  EXPECT_EQ(std::stod(fmt(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Config, Defaults) {
  const auto c = parse_config(json::object());
  EXPECT_EQ(c.system, "unicycle");
  EXPECT_EQ(c.synthesis.map, MapKind::General);
  EXPECT_EQ(c.output.format, "csv");
  EXPECT_EQ(c.params.anchor, Anchor::Final);
}

TEST(Config, ParsesSections) {
  json j = {{"system", {{"name", "mindy_like"}, {"d", 12}, {"k", 4}, {"anchor", 1}, {"T", 2.5}}},
            {"synthesis",
             {{"map", "minimum_energy"},
              {"K", 201},
              {"strategy", "dense_interpolant"},
              {"rtol", 1e-9},
              {"method", "dopri5"},
              {"chain", "per_node"}}},
            {"seed", 42},
            {"workers", 2},
            {"scale", {{"dims", {2, 4}}, {"trials", 2}}}};
  const auto c = parse_config(j);
  EXPECT_EQ(c.params.d, 12);
  EXPECT_EQ(c.params.k, 4);
  EXPECT_EQ(c.params.anchor, Anchor::Initial);
  EXPECT_EQ(*c.params.T, 2.5);
  EXPECT_EQ(c.params.seed, 42u);
  EXPECT_EQ(c.synthesis.map, MapKind::MinimumEnergy);
  EXPECT_EQ(c.synthesis.K, 201);
  EXPECT_EQ(*c.synthesis.strategy, EvalStrategy::DenseInterpolant);
  EXPECT_EQ(c.synthesis.solver.rtol, 1e-9);
  EXPECT_EQ(c.synthesis.solver.method, ode::Method::Dopri5);
  EXPECT_EQ(c.synthesis.chain, ChainStrategy::PerNode);
  EXPECT_EQ(c.synthesis.workers, 2u);
  EXPECT_EQ(c.scale.dims, (std::vector<int>{2, 4}));
}

TEST(Config, RejectsInvalid) {
  EXPECT_THROW(parse_config({{"sytem", {}}}), ConfigError);
  EXPECT_THROW(parse_config({{"system", {{"name", "bicycle"}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"system", {{"anchor", 3}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"synthesis", {{"map", "fast"}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"synthesis", {{"K", 100}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"synthesis", {{"eps_x", -1.0}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"synthesis", {{"N_max", "many"}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"output", {{"format", "xml"}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"scale", {{"dims", {8, 2}}}}}), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, Options) {
  CommandOptions o;
  o.out = "/tmp/x";
  o.seed = 9;
  o.format = "json";
  o.workers = 4;
  const auto c = apply_options(parse_config(json::object()), o);
  EXPECT_EQ(c.output.dir, "/tmp/x");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.params.seed, 9u);
  EXPECT_EQ(c.output.format, "json");
  EXPECT_EQ(c.synthesis.workers, 4u);
  o.format = "yaml";
  EXPECT_THROW(apply_options(c, o), ConfigError);
}

TEST(Chebyshev, ZeroAndConstant) {
  const auto z = chebyshev_control(Mat::Zero(2, 6), 0.0, 1.0);
  EXPECT_EQ(z(0.3), Vec::Zero(2));
  Mat c = Mat::Zero(2, 6);
  c.col(0).setOnes();
  const auto one = chebyshev_control(c, 0.0, 3.0);
  for (double t : {0.0, 1.1, 3.0}) EXPECT_EQ(one(t), Vec::Ones(2));
  EXPECT_THROW(chebyshev_control(Mat::Zero(1, 5), 0.0, 1.0), InvalidArgument);
}

TEST(Chebyshev, HigherModes) {
  Mat c = Mat::Zero(1, 6);
  c(0, 3) = 1.0;
  const auto u = chebyshev_control(c, 0.0, 2.0);
  for (double t : {0.0, 0.4, 1.0, 1.7, 2.0}) {
    const double s = t - 1.0;
    EXPECT_NEAR(u(t)[0], 4 * s * s * s - 3 * s, 1e-14);
  }
}

TEST(Chebyshev, SeededDeterminism) {
  const auto a = cmd_reference_control(3, 0.0, 1.0, 77);
  const auto b = cmd_reference_control(3, 0.0, 1.0, 77);
  const auto c = cmd_reference_control(3, 0.0, 1.0, 78);
  const Vec g = uniform_grid(0.0, 1.0, 11);
  EXPECT_EQ(a.sample(g), b.sample(g));
  EXPECT_NE(a.sample(g), c.sample(g));
}

TEST(Baseline, DriftlessIdentityInput) {
  SteeringProblem p;
  p.system = linear_system(Mat::Zero(2, 2), Mat::Identity(2, 2));
  p.x0 = (Vec(2) << 1, 2).finished();
  p.x1 = (Vec(2) << 4, -2).finished();
  p.t0 = 0.0;
  p.T = 2.0;
  const auto b = feedback_linearization_baseline(p);
  EXPECT_LE((b.control(0.7) - (p.x1 - p.x0) / 2.0).norm(), 1e-15);
  EXPECT_NEAR(b.energy, 25.0 / 4.0, 1e-12);
  p.x1 = p.x0;
  const auto zero = feedback_linearization_baseline(p);
  EXPECT_EQ(zero.control(1.0), Vec::Zero(2));
  EXPECT_EQ(zero.energy, 0.0);
}

TEST(Baseline, SteersHopfieldExactly) {
  const auto p = make_benchmark("hopfield2d_full");
  const auto b = feedback_linearization_baseline(p);
  ode::SolverConfig c;
  EXPECT_LE(endpoint_error(solve_trajectory(p, b.control, c), p.x1), 1e-8);
}

TEST(Baseline, NeedsFullActuation) {
  EXPECT_THROW(feedback_linearization_baseline(make_benchmark("hopfield2d_under")), NotFullyActuated);
  const auto dir = scratch_dir("baseline_under");
  const auto a = cmd_baseline(quick_config("hopfield2d_under", dir));
  EXPECT_FALSE(a.success);
  EXPECT_EQ(a.status, "not_fully_actuated");
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
}

TEST(Artifact, JsonRoundTripIsBitExact) {
  const auto dir = scratch_dir("roundtrip");
  const auto a = cmd_synthesize(quick_config("sir", dir));
  const auto b = load_artifact(dir);
  EXPECT_EQ(b.schema, kSchema);
  EXPECT_EQ(b.status, a.status);
  EXPECT_EQ(b.fired, a.fired);
  EXPECT_EQ(b.summary, a.summary);
  EXPECT_EQ(b.config, a.config);
  ASSERT_EQ(b.telemetry.size(), a.telemetry.size());
  for (std::size_t i = 0; i < a.telemetry.size(); ++i) {
    const auto& x = a.telemetry[i];
    const auto& y = b.telemetry[i];
    EXPECT_EQ(x.n, y.n);
    EXPECT_EQ(x.err_end, y.err_end);
    EXPECT_EQ(x.err_fp, y.err_fp);
    EXPECT_EQ(x.energy, y.energy);
    EXPECT_EQ(x.energy_sq_norm, y.energy_sq_norm);
    EXPECT_EQ(x.gramian_condition, y.gramian_condition);
    EXPECT_EQ(x.wall_time, y.wall_time);
    EXPECT_EQ(x.certificate, y.certificate);
    EXPECT_EQ(x.least_squares, y.least_squares);
  }
  EXPECT_EQ(b.control.values, a.control.values);
  EXPECT_EQ(b.trajectory.t, a.trajectory.t);
  EXPECT_EQ(to_json(b), to_json(a));
}

TEST(Artifact, NonFiniteTelemetrySurvives) {
  RunArtifact a;
  a.command = "synthesize";
  IterationRecord r;
  r.gramian_condition = std::numeric_limits<double>::infinity();
  a.telemetry.push_back(r);
  const auto b = artifact_from(json::parse(to_json(a).dump()));
  EXPECT_TRUE(std::isinf(b.telemetry[0].gramian_condition));
  json bad = to_json(a);
  bad["schema"] = "other/v9";
  EXPECT_THROW(artifact_from(bad), ConfigError);
}

TEST(Artifact, CsvLayout) {
  const auto dir = scratch_dir("csv");
  const auto a = cmd_synthesize(quick_config("unicycle", dir));
  const auto tel = slurp(dir / "telemetry.csv");
  EXPECT_EQ(tel.substr(0, tel.find('\n')), "n,err_end,err_fp,energy,energy_sq_norm,gramian_condition,wall_time");
  const auto ctl = slurp(dir / "control.csv");
  EXPECT_EQ(ctl.substr(0, ctl.find('\n')), "t,u1,u2");
  const auto trj = slurp(dir / "trajectory.csv");
  EXPECT_EQ(trj.substr(0, trj.find('\n')), "t,x1,x2,x3");
  EXPECT_EQ(std::count(ctl.begin(), ctl.end(), '\n'), 52);
  EXPECT_EQ(std::count(tel.begin(), tel.end(), '\n'), static_cast<long>(a.telemetry.size() + 1));
}

TEST(Artifact, JsonFormatWritesTelemetryJson) {
  const auto dir = scratch_dir("jsonfmt");
  auto c = quick_config("pendulum", dir);
  c.output.format = "json";
  cmd_synthesize(c);
  EXPECT_TRUE(fs::exists(dir / "telemetry.json"));
  EXPECT_FALSE(fs::exists(dir / "telemetry.csv"));
}

TEST(Synthesize, TargetOnDriftOrbit) {
  const auto dir = scratch_dir("orbit");
  auto c = quick_config("hopfield2d_full", dir);
  const auto p0 = build_problem(c);
  c.params.x1 = drift_flow(*p0.system, p0.t0, p0.T, p0.x0, c.synthesis.solver);
  const auto a = cmd_synthesize(c);
  EXPECT_EQ(a.summary["iterations"], 0);
  EXPECT_EQ(a.control.values, Mat::Zero(2, 51));
  EXPECT_TRUE(a.success);
}

TEST(Synthesize, SummaryFields) {
  const auto dir = scratch_dir("summary");
  const auto a = cmd_synthesize(quick_config("unicycle", dir));
  for (const char* key : {"iterations", "iterations_to_floor", "final_err_end", "energy", "energy_sq_norm",
                          "l2_norm", "certificate", "map_image_energy", "map", "anchor", "K", "strategy"})
    EXPECT_TRUE(a.summary.contains(key)) << key;
  EXPECT_DOUBLE_EQ(num_from(a.summary["l2_norm"]), std::sqrt(num_from(a.summary["energy_sq_norm"])));
  EXPECT_EQ(a.summary["K"], 101);
}

TEST(Synthesize, RepeatedRunsAreIdentical) {
  const auto a = cmd_synthesize(quick_config("spacecraft", scratch_dir("rep_a")));
  const auto b = cmd_synthesize(quick_config("spacecraft", scratch_dir("rep_b")));
  ASSERT_EQ(a.telemetry.size(), b.telemetry.size());
  for (std::size_t i = 0; i < a.telemetry.size(); ++i) {
    EXPECT_EQ(a.telemetry[i].err_end, b.telemetry[i].err_end);
    EXPECT_EQ(a.telemetry[i].err_fp, b.telemetry[i].err_fp);
    EXPECT_EQ(a.telemetry[i].energy, b.telemetry[i].energy);
  }
  EXPECT_EQ(a.control.values, b.control.values);
}

TEST(Scale, StructureAndDeterminism) {
  const auto dir = scratch_dir("scale");
  json j = {{"system", {{"name", "mindy_like"}}},
            {"synthesis", {{"N_max", 2}, {"K", 51}}},
            {"seed", 5},
            {"scale", {{"dims", {2, 3}}, {"trials", 2}}},
            {"output", {{"dir", dir.string()}}}};
  const auto rows = cmd_scale(parse_config(j));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].d, 2);
  EXPECT_EQ(rows[0].err_end.size() + static_cast<std::size_t>(rows[0].failures), 2u);
  EXPECT_TRUE(fs::exists(dir / "scale.csv"));
  EXPECT_TRUE(fs::exists(dir / "d3_trial1" / "summary.json"));
  const auto again = cmd_scale(parse_config(j));
  EXPECT_EQ(again[0].err_end, rows[0].err_end);
  EXPECT_EQ(again[1].err_end, rows[1].err_end);
}

TEST(Reference, WritesEndpoint) {
  const auto dir = scratch_dir("reference");
  const auto a = cmd_reference(quick_config("hopfield2d_under", dir));
  EXPECT_EQ(a.summary["endpoint"].size(), 2u);
  EXPECT_GT(num_from(a.summary["energy"]), 0.0);
}

TEST(Underactuated, DegenerateFullyActuatedCall) {
  const auto dir = scratch_dir("under_full");
  json j = {{"system", {{"name", "mindy_like"}}},
            {"synthesis", {{"N_max", 10}, {"rtol", 1e-10}, {"atol", 1e-12}}},
            {"underactuated", {{"d", 4}, {"k", 4}, {"T", 2.0}}},
            {"seed", 3},
            {"output", {{"dir", dir.string()}}}};
  const auto r = cmd_underactuated_demo(parse_config(j));
  EXPECT_TRUE(is_success(r.run.status));
  EXPECT_LE(r.run.final_err_end(), 1e-8);
  EXPECT_TRUE(r.energy_reduced);
  EXPECT_TRUE(fs::exists(dir / "reference_control.csv"));
}

TEST(MeanStd, Values) {
  const auto [m, s] = mean_std({1.0, 3.0});
  EXPECT_DOUBLE_EQ(m, 2.0);
  EXPECT_DOUBLE_EQ(s, std::sqrt(2.0));
  EXPECT_EQ(mean_std({4.0}).second, 0.0);
  EXPECT_TRUE(std::isnan(mean_std({}).first));
}
