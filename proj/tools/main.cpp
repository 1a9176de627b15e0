#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mml/errors.hpp"
#include "mml/experiment.hpp"
#include "mml/predictor.hpp"
#include "mml/stats.hpp"

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool verbose = false;
};

mml::ExperimentConfig load(const Globals& g) {
  mml::ExperimentConfig cfg;
  if (!g.config.empty()) {
    cfg = mml::parse_config(g.config);
  } else {
    cfg.antennas = 3;
    cfg.users = 3;
  }
  if (g.seed) cfg.seeds = {*g.seed};
  if (!g.out.empty()) cfg.output = g.out;
  cfg.validate();
  return cfg;
}

mml::ProgressFn progress(const Globals& g) {
  if (!g.verbose) return {};
  return [](const std::string& line) { std::cout << line << std::endl; };
}

int run(int argc, char** argv) {
  CLI::App app{"Memory-based meta-learning for multi-user beamforming"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "Configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Run a single seed instead of the configured list");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--verbose", g.verbose, "Stream progress records to stdout");

  auto* gen = app.add_subcommand("gen-data", "Write the training dataset of one seed");
  std::optional<std::size_t> gen_count;
  std::string gen_mix;
  std::string gen_file;
  gen->add_option("--count", gen_count, "Number of realizations");
  gen->add_option("--mix", gen_mix, "Channel mixture, e.g. \"rayleigh@0.5, rician:3@0.5\"");
  gen->add_option("--file", gen_file, "Output file (default <out>/dataset_seed<seed>.mmlc)");

  auto* train = app.add_subcommand("train", "Train checkpoints over the SNR grid");
  std::vector<std::string> train_methods{"maml", "unsupervised"};
  train->add_option("--method", train_methods, "maml and/or unsupervised")
      ->check(CLI::IsMember({"maml", "unsupervised"}));

  auto* eval = app.add_subcommand("eval", "Evaluate methods and write <out>/eval.csv");
  std::vector<std::string> eval_methods;
  eval->add_option("--method", eval_methods, "Methods to evaluate (default: configured list)")
      ->check(CLI::IsMember(mml::kAllMethods));

  auto* figure = app.add_subcommand("figure", "Reproduce one comparison figure as <out>/<id>.csv");
  std::string figure_id;
  figure->add_option("id", figure_id, "fig5, fig6, fig7 or fig8")->required()->check(
      CLI::IsMember({"fig5", "fig6", "fig7", "fig8"}));

  auto* oracle = app.add_subcommand("oracle", "Compare WMMSE against the grid-search oracle");
  std::size_t oracle_instances = 20;
  std::size_t grid_steps = 41;
  double oracle_snr = 10.0;
  oracle->add_option("--instances", oracle_instances, "Random channel instances")->capture_default_str();
  oracle->add_option("--grid-steps", grid_steps, "Grid points per dimension")->capture_default_str();
  oracle->add_option("--snr", oracle_snr, "SNR in dB")->capture_default_str();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the full pipeline gradient");
  std::size_t draws = 20;
  double gc_snr = 10.0;
  gradcheck->add_option("--draws", draws, "Random draws")->capture_default_str();
  gradcheck->add_option("--snr", gc_snr, "SNR in dB")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const mml::ExperimentConfig cfg = load(g);
  const std::uint64_t seed = cfg.seeds.front();

  if (*gen) {
    mml::ExperimentConfig c = cfg;
    if (gen_count) c.dataset_size = *gen_count;
    if (!gen_mix.empty()) c.train_mix = mml::parse_channel_mix(gen_mix);
    const std::filesystem::path file =
        gen_file.empty() ? c.output / ("dataset_seed" + std::to_string(seed) + ".mmlc") : std::filesystem::path(gen_file);
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    mml::write_dataset(file, mml::training_dataset(c, seed));
    std::cout << file.string() << "\n";
  } else if (*train) {
    mml::echo_config(cfg);
    for (const auto& method : train_methods)
      for (double snr : cfg.snr_db)
        for (std::uint64_t s : cfg.seeds) std::cout << mml::run_training(cfg, method, snr, s, progress(g)).string() << "\n";
  } else if (*eval) {
    mml::ExperimentConfig c = cfg;
    if (!eval_methods.empty()) c.methods = eval_methods;
    mml::echo_config(c);
    const auto path = c.output / "eval.csv";
    mml::emit_results(mml::run_eval(c), path, c.json);
    std::cout << path.string() << "\n";
  } else if (*figure) {
    std::cout << mml::run_figure(cfg, figure_id, progress(g)).string() << "\n";
  } else if (*oracle) {
    const mml::SystemConfig sys = cfg.system(oracle_snr);
    mml::Rng rng = mml::Rng::stream(seed, 0x5000);
    std::size_t ok = 0;
    std::cout << "instance,wmmse_wsr,oracle_wsr,ratio\n";
    for (std::size_t i = 0; i < oracle_instances; ++i) {
      const auto h = mml::sample_realization(rng, mml::ChannelModelSpec::rayleigh(), cfg.antennas, cfg.users);
      const double w = mml::wsr(h, mml::wmmse_solve(h, sys, rng, cfg.wmmse).v, sys);
      const double o = mml::grid_oracle(h, sys, grid_steps).wsr;
      const double ratio = o > 0 ? w / o : 1.0;
      if (ratio >= 0.99) ++ok;
      std::printf("%zu,%.12g,%.12g,%.6f\n", i, w, o, ratio);
    }
    std::cout << "# " << ok << "/" << oracle_instances << " instances with wmmse >= 0.99 * oracle\n";
  } else if (*gradcheck) {
    const mml::SystemConfig sys = cfg.system(gc_snr);
    mml::Rng rng = mml::Rng::stream(seed, 0x6000);
    const auto start = std::chrono::steady_clock::now();
    std::size_t passed = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
      const auto report = mml::pipeline_gradcheck(sys, rng, 2, cfg.meta.predictor);
      worst = std::max(worst, report.max_rel_error);
      if (report.passed) ++passed;
      std::printf("draw %zu: max_rel_error %.3e checked %zu skipped %zu %s\n", i, report.max_rel_error,
                  report.checked, report.skipped, report.passed ? "ok" : "FAILED");
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("# %zu/%zu draws passed, worst relative error %.3e, %.1f s\n", passed, draws, worst, secs);
    if (passed != draws) return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const mml::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const mml::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const mml::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
