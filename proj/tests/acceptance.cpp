// Acceptance checks; prints one PASS/FAIL line per criterion.
// Usage: acceptance <path-to-mml-cli>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <tuple>

#include "mml/experiment.hpp"
#include "mml/memory.hpp"
#include "mml/predictor.hpp"
#include "mml/stats.hpp"
#include "mml/wmmse.hpp"

using namespace mml;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("criterion %d: %s (%s; %.1f s)\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path workdir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mml_acceptance_" + name);
  fs::remove_all(dir);
  return dir;
}

double closed_form(const ChannelRealization& h, const SystemConfig& cfg) {
  return std::log2(1.0 + cfg.power * norm2_squared(h.users[0]) / cfg.sigma2);
}

ExperimentConfig full_size_config(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.antennas = 3;
  cfg.users = 3;
  cfg.output = out;
  return cfg;
}

Outcome gradients() {
  const auto start = std::chrono::steady_clock::now();
  std::size_t draws = 0;
  std::size_t passed = 0;
  double worst = 0.0;
  for (std::size_t n : {2u, 3u}) {
    const SystemConfig cfg = SystemConfig::with_snr(n, n, 10.0);
    Rng rng = Rng::stream(1, 0x100 + n);
    for (int i = 0; i < (n == 2 ? 20 : 5); ++i) {
      const auto r = pipeline_gradcheck(cfg, rng);
      ++draws;
      passed += r.passed && r.max_rel_error < 1e-4 ? 1 : 0;
      worst = std::max(worst, r.max_rel_error);
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {passed == draws && secs < 60.0,
          fmt("%zu/%zu draws within 1e-4, worst relative error %.2e, %.1f s", passed, draws, worst, secs)};
}

Outcome wmmse_oracle() {
  const auto start = std::chrono::steady_clock::now();
  const SystemConfig cfg = SystemConfig::with_snr(2, 2, 10.0);
  Rng rng = Rng::stream(2, 0x200);
  int ok = 0;
  double worst = 1e9;
  for (int i = 0; i < 20; ++i) {
    const auto h = sample_realization(rng, ChannelModelSpec::rayleigh(), 2, 2);
    const double w = wsr(h, wmmse_solve(h, cfg, rng).v, cfg);
    const double o = grid_oracle(h, cfg, 41).wsr;
    ok += w >= 0.99 * o ? 1 : 0;
    worst = std::min(worst, w / o);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {ok == 20 && secs < 300.0, fmt("%d/20 instances at >= 0.99 of the oracle, worst ratio %.4f", ok, worst)};
}

Outcome wmmse_monotone() {
  const SystemConfig cfg = SystemConfig::with_snr(3, 3, 10.0);
  Rng rng = Rng::stream(3, 0x300);
  int ok = 0;
  double worst_drop = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto h = sample_realization(rng, ChannelModelSpec::rayleigh(), 3, 3);
    const auto res = wmmse_solve(h, cfg, rng);
    bool mono = true;
    for (std::size_t t = 1; t < res.wsr_trace.size(); ++t) {
      const double drop = res.wsr_trace[t - 1] - res.wsr_trace[t];
      worst_drop = std::max(worst_drop, drop);
      if (drop > 1e-8) mono = false;
    }
    ok += mono ? 1 : 0;
  }
  return {ok == 100, fmt("%d/100 traces non-decreasing, largest drop %.2e", ok, worst_drop)};
}

Outcome single_user() {
  ExperimentConfig ec;
  ec.antennas = 3;
  ec.users = 1;
  ec.dataset_size = 200;
  ec.slots = 5;
  ec.samples_per_slot = 20;
  ec.final_from_slot = 1;
  ec.meta.epochs = 20;
  ec.meta.unsup_epochs = 20;
  double worst_excess = -1e9;
  double worst_wmmse_gap = 0.0;
  for (double snr : {0.0, 10.0, 20.0}) {
    const SystemConfig cfg = ec.system(snr);
    const auto stream = test_stream(ec, 5, snr);
    const ChannelSet data = training_dataset(ec, 5);
    const PredictorParams maml = meta_train(data, ec.meta, cfg, 5).params;
    const PredictorParams unsup = unsupervised_train(data, ec.meta, cfg, 5).params;

    std::vector<std::vector<std::vector<double>>> per_method;
    std::vector<std::vector<double>> wm, un;
    Rng rng = Rng::stream(5, 0x400);
    for (const auto& slot : stream) {
      std::vector<double> w;
      for (const auto& h : slot) {
        const Beamformer v = wmmse_solve(h, cfg, rng).v;
        if (total_power(v) > cfg.power * (1 + 1e-9)) return {false, "wmmse beamformer above the power budget"};
        w.push_back(wsr(h, v, cfg));
      }
      wm.push_back(w);
      un.push_back(evaluate_wsr(unsup, slot, cfg, ec.meta.predictor));
    }
    per_method.push_back(wm);
    per_method.push_back(un);
    per_method.push_back(adapt_stream(maml, stream, ec.meta.inner_lr, 1, cfg, ec.meta).wsr);
    per_method.push_back(adapt_stream(initial_params(cfg, 5), stream, ec.meta.inner_lr, 1, cfg, ec.meta).wsr);
    per_method.push_back(mml_test_loop(maml, stream, ec.meta, cfg, ec.memory).wsr);

    for (std::size_t m = 0; m < per_method.size(); ++m)
      for (std::size_t s = 0; s < stream.size(); ++s)
        for (std::size_t i = 0; i < stream[s].size(); ++i) {
          const double bound = closed_form(stream[s][i], cfg);
          worst_excess = std::max(worst_excess, per_method[m][s][i] - bound);
          if (m == 0) worst_wmmse_gap = std::max(worst_wmmse_gap, std::abs(per_method[m][s][i] - bound));
        }
  }
  return {worst_excess <= 1e-9 && worst_wmmse_gap <= 1e-6,
          fmt("largest excess over the bound %.2e, largest wmmse gap %.2e", worst_excess, worst_wmmse_gap)};
}

Outcome w_identity() {
  Rng rng = Rng::stream(6, 0x500);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng.below(4);
    const std::size_t k = 1 + rng.below(4);
    SystemConfig cfg = SystemConfig::with_snr(n, k, -10.0 + 40.0 * rng.uniform());
    const auto h = sample_realization(rng, ChannelModelSpec::rayleigh(), n, k);
    CMat v(n, k);
    for (auto& x : v.data()) x = rng.complex_gaussian();
    v = normalize_to_power(v, cfg.power);
    const auto w = compute_w(h, v, cfg);
    for (std::size_t u = 0; u < k; ++u) {
      const double expected = 1.0 + sinr(h, v, cfg, u);
      worst = std::max(worst, std::abs(w[u] - expected) / std::max(1.0, std::abs(expected)));
    }
  }
  return {worst <= 1e-12, fmt("largest relative deviation %.2e over 1000 cases", worst)};
}

Outcome distributions() {
  const std::size_t n = 100000;
  const auto envelopes = [&](const ChannelModelSpec& spec, std::uint64_t id) {
    Rng rng = Rng::stream(7, id);
    std::vector<double> r(n);
    for (auto& x : r) x = std::abs(sample_channel_vector(rng, spec, 1)[0]);
    return r;
  };
  const auto rayleigh = envelopes(ChannelModelSpec::rayleigh(), 0x600);
  const double crit = stats::ks_critical_value(n, n, 0.01);
  const double d_naka = stats::ks_statistic(envelopes(ChannelModelSpec::nakagami(1.0), 0x601), rayleigh);
  const double d_rice = stats::ks_statistic(envelopes(ChannelModelSpec::rician(0.0), 0x602), rayleigh);
  return {d_naka <= crit && d_rice <= crit,
          fmt("KS nakagami(1) %.4f, rician(0) %.4f, 1%% critical value %.4f", d_naka, d_rice, crit)};
}

Outcome maml_vs_unsupervised() {
  ExperimentConfig cfg = full_size_config(workdir("c7"));
  cfg.test_mix = cfg.train_mix;
  cfg.snr_db = {15, 20};
  cfg.methods = {"maml", "unsupervised"};
  train_missing(cfg);
  std::string detail;
  bool pass = true;
  for (double snr : cfg.snr_db) {
    int wins = 0;
    double gap = 0.0;
    for (std::uint64_t seed : cfg.seeds) {
      const double m = run_eval_cell(cfg, "maml", snr, seed).back().wsr_mean;
      const double u = run_eval_cell(cfg, "unsupervised", snr, seed).back().wsr_mean;
      wins += m >= u ? 1 : 0;
      gap += (m - u) / cfg.seeds.size();
    }
    pass = pass && wins >= 4;
    detail += fmt("%s%g dB: maml >= unsupervised in %d/5 seeds, mean gap %+.3f", detail.empty() ? "" : "; ", snr, wins,
                  gap);
  }
  return {pass, detail};
}

struct MemoryRuns {
  bool bounded = true;
  bool identical = true;
  std::size_t runs = 0;
};
MemoryRuns memory_runs;

Outcome memory_vs_ablation() {
  ExperimentConfig cfg = full_size_config(workdir("c8"));
  cfg.snr_db = {10};
  cfg.methods = {"mml"};
  train_missing(cfg);
  std::string detail;
  bool pass = true;
  for (double m : {1.0, 10.0}) {
    cfg.test_mix = {{ChannelModelSpec::nakagami(m), 1.0}};
    int wins = 0;
    double gap = 0.0;
    for (std::uint64_t seed : cfg.seeds) {
      ExperimentConfig with = cfg;
      with.memory.capacity = 64;
      ExperimentConfig without = cfg;
      without.memory.capacity = 0;
      const double a = run_eval_cell(with, "mml", 10, seed).back().wsr_mean;
      const double b = run_eval_cell(without, "mml", 10, seed).back().wsr_mean;
      wins += a > b ? 1 : 0;
      gap += (a - b) / cfg.seeds.size();

      const PredictorParams phi = read_checkpoint(checkpoint_path(cfg, "maml", 10, seed));
      const SystemConfig sys = cfg.system(10);
      const auto stream = test_stream(cfg, seed, 10);
      const auto full = mml_test_loop(phi, stream, cfg.meta, sys, with.memory,
                                      [&](std::size_t, const MemorySet& mem) {
                                        if (mem.size() > with.memory.capacity) memory_runs.bounded = false;
                                      });
      for (std::size_t s : full.memory_sizes)
        if (s > with.memory.capacity) memory_runs.bounded = false;
      const auto zero = mml_test_loop(phi, stream, cfg.meta, sys, without.memory);
      const auto plain = adapt_stream(phi, stream, cfg.meta.inner_lr, without.memory.adapt_steps, sys, cfg.meta);
      ++memory_runs.runs;
      if (!(zero.wsr == plain.wsr && zero.params == plain.params)) memory_runs.identical = false;
    }
    pass = pass && wins >= 4;
    detail += fmt("%snakagami m=%g: memory beats M=0 in %d/5 seeds, mean gap %+.3f", detail.empty() ? "" : "; ", m,
                  wins, gap);
  }
  return {pass, detail};
}

std::vector<std::size_t> sort_oracle(const std::vector<MemoryEntry>& entries, std::size_t count) {
  std::vector<std::tuple<double, long long, long long>> keys;
  for (std::size_t i = 0; i < entries.size(); ++i)
    keys.emplace_back(-entries[i].last_loss, -static_cast<long long>(entries[i].inserted_at), static_cast<long long>(i));
  std::sort(keys.begin(), keys.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(count, keys.size()); ++i) out.push_back(static_cast<std::size_t>(std::get<2>(keys[i])));
  return out;
}

Outcome memory_invariants() {
  Rng rng = Rng::stream(9, 0x900);
  int agree = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<MemoryEntry> entries(1 + rng.below(200));
    for (auto& e : entries) {
      e.last_loss = static_cast<double>(rng.below(20)) / 4.0;
      e.inserted_at = rng.below(5);
    }
    const std::size_t count = rng.below(entries.size() + 10);
    agree += rank_hardest(entries, count) == sort_oracle(entries, count) ? 1 : 0;
  }
  if (memory_runs.runs == 0) return {false, "no full memory run was recorded"};
  return {agree == 1000 && memory_runs.bounded && memory_runs.identical,
          fmt("rank_hardest matches the sort oracle in %d/1000 cases; memory bounded: %s; M=0 identical to plain "
              "adaptation: %s",
              agree, memory_runs.bounded ? "yes" : "no", memory_runs.identical ? "yes" : "no")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const std::string& cli) {
  const fs::path dir = workdir("c10");
  fs::create_directories(dir);
  std::ofstream(dir / "tiny.ini") << "[system]\nn_antennas = 2\nn_users = 2\n"
                                     "[train]\ndataset_size = 40\n"
                                     "[test]\nslots = 4\nsamples_per_slot = 6\nfinal_from_slot = 2\n"
                                     "[meta]\nn_s = 8\nn_q = 8\nn_t = 2\nepochs = 3\nunsup_epochs = 3\nunsup_batch = 8\n"
                                     "[memory]\ncapacity = 8\n"
                                     "[experiment]\nsnr_db = 0, 10\nseeds = 1, 2\n";
  for (const char* run : {"a", "b"}) {
    const std::string cmd = "\"" + cli + "\" --config \"" + (dir / "tiny.ini").string() + "\" --out \"" +
                            (dir / run).string() + "\" figure fig6 > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "cli run failed: " + cmd};
  }
  const std::string a = slurp(dir / "a" / "fig6.csv");
  const std::string b = slurp(dir / "b" / "fig6.csv");
  return {!a.empty() && a == b, fmt("two runs wrote %zu and %zu bytes, %s", a.size(), b.size(),
                                    a == b ? "byte-identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <path-to-mml-cli>\n");
    return 1;
  }
  report(1, gradients);
  report(2, wmmse_oracle);
  report(3, wmmse_monotone);
  report(4, single_user);
  report(5, w_identity);
  report(6, distributions);
  report(7, maml_vs_unsupervised);
  report(8, memory_vs_ablation);
  report(9, memory_invariants);
  report(10, [&] { return determinism(argv[1]); });
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
