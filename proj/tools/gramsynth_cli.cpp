#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gramsynth/harness.hpp"

namespace gh = gramsynth::harness;

namespace {

enum Exit { kOk = 0, kRunFailed = 1, kBadConfig = 2, kError = 3 };

void report(const gh::RunArtifact& a) {
  std::cout << a.command << ": system=" << a.system << " status=" << a.status;
  if (a.summary.contains("final_err_end")) std::cout << " err_end=" << a.summary["final_err_end"].dump();
  if (a.summary.contains("l2_norm")) std::cout << " l2_norm=" << a.summary["l2_norm"].dump();
  if (a.summary.contains("iterations")) std::cout << " iterations=" << a.summary["iterations"].dump();
  std::cout << "\n";
  if (!a.message.empty()) std::cout << "  " << a.message << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gramian fixed-point steering control synthesis"};
  app.require_subcommand(1);
  app.fallthrough();

  gh::CommandOptions opts;
  std::string out, format;
  std::uint64_t seed = 0;
  unsigned workers = 0;
  app.add_option("--out", out, "Output directory")->envname("GRAMSYNTH_OUT");
  app.add_option("--seed", seed, "Random seed")->envname("GRAMSYNTH_SEED");
  app.add_option("--format", format, "Telemetry format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->envname("GRAMSYNTH_FORMAT");
  app.add_option("--workers", workers, "Worker threads (0 = all cores)")->envname("GRAMSYNTH_WORKERS");

  std::string config_path;
  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
    return sub;
  };
  auto* synth = add("synthesize", "Run the Picard iteration for one system");
  auto* scale = add("scale", "Per-dimension timing on the mindy_like surrogate");
  auto* under = add("underactuated", "Minimum-energy synthesis towards a reference endpoint");
  auto* base = add("baseline", "Feedback-linearization baseline");
  auto* ref = add("reference", "Seeded Chebyshev reference control");
  CLI11_PARSE(app, argc, argv);

  if (app.count("--out")) opts.out = out;
  if (app.count("--seed") || std::getenv("GRAMSYNTH_SEED")) opts.seed = seed;
  if (app.count("--format") || std::getenv("GRAMSYNTH_FORMAT")) opts.format = format;
  if (app.count("--workers") || std::getenv("GRAMSYNTH_WORKERS")) opts.workers = workers;
  if (std::getenv("GRAMSYNTH_OUT")) opts.out = out;

  try {
    const auto config = gh::apply_options(gh::load_config(config_path), opts);
    if (synth->parsed()) {
      const auto a = gh::cmd_synthesize(config);
      report(a);
      return a.success ? kOk : kRunFailed;
    }
    if (base->parsed()) {
      const auto a = gh::cmd_baseline(config);
      report(a);
      return a.success ? kOk : kRunFailed;
    }
    if (ref->parsed()) {
      const auto a = gh::cmd_reference(config);
      report(a);
      return kOk;
    }
    if (under->parsed()) {
      const auto r = gh::cmd_underactuated_demo(config);
      report(r.artifact);
      std::cout << "  reference_energy=" << r.reference_energy << " synthesized_energy=" << r.synthesized_energy
                << " energy_reduced=" << r.energy_reduced << " monotone_decay=" << r.monotone_decay << "\n";
      return r.artifact.success && r.energy_reduced ? kOk : kRunFailed;
    }
    if (scale->parsed()) {
      const auto rows = gh::cmd_scale(config);
      int failures = 0;
      for (const auto& r : rows) {
        const auto [mt, st] = gh::mean_std(r.iteration_time);
        const auto [me, se] = gh::mean_std(r.err_end);
        std::printf("d=%d  iteration_time=%.4g±%.2g s  err_end=%.3g±%.2g  failures=%d\n", r.d, mt, st, me, se,
                    r.failures);
        failures += r.failures;
      }
      return failures == 0 ? kOk : kRunFailed;
    }
  } catch (const gramsynth::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
  return kError;
}
