#include <cmath>

#include "doctest.h"
#include "mml/errors.hpp"
#include "mml/meta.hpp"
#include "mml/wmmse.hpp"
#include "test_support.hpp"

using namespace mml;

namespace {

ChannelSet draw(Rng& rng, const ChannelModelSpec& spec, std::size_t count, std::size_t n = 3) {
  ChannelSet out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_realization(rng, spec, n, n));
  return out;
}

double sum_loss(const PredictorParams& p, const ChannelSet& batch, const SystemConfig& cfg) {
  return predictor_loss(p, batch, cfg) * static_cast<double>(batch.size());
}

}  // namespace

TEST_CASE("inner_adapt definition checks") {
  const SystemConfig cfg = SystemConfig::with_snr(3, 3, 10.0);
  const MetaConfig meta;
  Rng rng(1);
  const PredictorParams theta = initial_params(cfg, 1);
  const ChannelSet support = draw(rng, ChannelModelSpec::rayleigh(), 40);
  const std::uint64_t before = parameter_hash(theta);

  CHECK(inner_adapt(theta, support, 0.0, 1, cfg, meta) == theta);

  const PredictorParams one = inner_adapt(theta, support, 0.01, 1, cfg, meta);
  CHECK(parameter_hash(theta) == before);
  // Independent gradient: the mean-loss gradient scaled to the summed loss.
  const LossAndGradient lg = loss_and_gradient(theta, support, cfg);
  PredictorParams expected = theta;
  std::vector<double> g = lg.gradient;
  for (auto& x : g) x *= 40.0;
  sgd_step(expected.values, g, 0.01);
  CHECK(one == expected);

  CHECK(adapt_on_test(theta, support, 0.01, 1, cfg, meta) == one);
  CHECK(adapt_on_test(theta, support, 0.01, 0, cfg, meta) == theta);
  CHECK_THROWS_AS(inner_adapt(theta, {}, 0.01, 1, cfg, meta), ArgumentError);

  MetaConfig mean_meta;
  mean_meta.reduction = LossReduction::mean;
  PredictorParams mean_expected = theta;
  sgd_step(mean_expected.values, lg.gradient, 0.01);
  CHECK(inner_adapt(theta, support, 0.01, 1, cfg, mean_meta) == mean_expected);
}

TEST_CASE("inner_adapt descends on the support set") {
  const SystemConfig cfg = SystemConfig::with_snr(3, 3, 10.0);
  const MetaConfig meta;
  Rng rng(2);
  int descended = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const PredictorParams theta = initial_params(cfg, 100 + trial);
    const ChannelSet support = draw(rng, ChannelModelSpec::rayleigh(), 40);
    const PredictorParams adapted = inner_adapt(theta, support, 0.01, 1, cfg, meta);
    descended += sum_loss(adapted, support, cfg) <= sum_loss(theta, support, cfg) ? 1 : 0;
  }
  CHECK(descended >= 95);
}

TEST_CASE("adapt_on_test descends on a Nakagami batch") {
  const SystemConfig cfg = SystemConfig::with_snr(3, 3, 10.0);
  const MetaConfig meta;
  Rng rng(3);
  int descended = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const PredictorParams phi = initial_params(cfg, 200 + trial);
    const ChannelSet batch = draw(rng, ChannelModelSpec::nakagami(10.0), 40);
    const PredictorParams adapted = adapt_on_test(phi, batch, 0.01, 1, cfg, meta);
    descended += sum_loss(adapted, batch, cfg) < sum_loss(phi, batch, cfg) ? 1 : 0;
  }
  CHECK(descended >= 45);
}

TEST_CASE("outer_update with a zero inner rate is an Adam step on the query loss") {
  const SystemConfig cfg = SystemConfig::with_snr(3, 3, 10.0);
  MetaConfig meta;
  meta.inner_lr = 0.0;
  Rng rng(4);
  const Task task{draw(rng, ChannelModelSpec::rayleigh(), 10), draw(rng, ChannelModelSpec::rician(3.0), 10)};
  PredictorParams phi = initial_params(cfg, 4);
  PredictorParams expected = phi;

  AdamState adam(phi.size());
  outer_update(phi, std::span<const Task>(&task, 1), meta, cfg, adam);

  AdamState reference(expected.size());
  const auto lg = batch_objective(expected, task.query, cfg, meta);
  adam_step(reference, expected.values, lg.gradient, meta.outer_lr);
  CHECK(phi == expected);
}

TEST_CASE("outer_update accumulates per-task gradients") {
  const SystemConfig cfg = SystemConfig::with_snr(2, 2, 10.0);
  const MetaConfig meta;
  Rng rng(5);
  std::vector<Task> tasks;
  for (int i = 0; i < 40; ++i)
    tasks.push_back(make_task(rng, ChannelModelSpec::rayleigh(), 5, 5, 2, 2));
  PredictorParams phi = initial_params(cfg, 5);
  const PredictorParams phi0 = phi;

  std::vector<std::vector<double>> per_task;
  for (const Task& t : tasks) {
    const auto adapted = inner_adapt(phi0, t.support, meta.inner_lr, meta.inner_steps, cfg, meta);
    per_task.push_back(batch_objective(adapted, t.query, cfg, meta).gradient);
  }
  std::vector<double> forward(phi.size(), 0.0);
  std::vector<double> backward(phi.size(), 0.0);
  for (std::size_t t = 0; t < per_task.size(); ++t)
    for (std::size_t i = 0; i < phi.size(); ++i) forward[i] += per_task[t][i];
  for (std::size_t t = per_task.size(); t-- > 0;)
    for (std::size_t i = 0; i < phi.size(); ++i) backward[i] += per_task[t][i];

  AdamState adam(phi.size());
  const auto stats = outer_update(phi, tasks, meta, cfg, adam);
  CHECK(stats.meta_gradient == forward);
  double scale = 0.0;
  double diff = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    scale = std::max(scale, std::abs(forward[i]));
    diff = std::max(diff, std::abs(forward[i] - backward[i]));
  }
  CHECK(diff <= 1e-10 * scale);
}

TEST_CASE("meta_train basics") {
  const SystemConfig cfg = SystemConfig::with_snr(3, 3, 10.0);
  Rng rng(6);
  const ChannelSet data =
      make_mixed_dataset(rng, parse_channel_mix("rayleigh@0.5, rician:3@0.5"), 500, 3, 3);
  MetaConfig meta;
  meta.epochs = 0;
  CHECK(meta_train(data, meta, cfg, 7).params == initial_params(cfg, 7));

  meta.epochs = 3;
  meta.n_t = 5;
  const auto a = meta_train(data, meta, cfg, 7);
  const auto b = meta_train(data, meta, cfg, 7);
  CHECK(a.params == b.params);
  CHECK(a.log.epochs.size() == 3);
  CHECK_FALSE(meta_train(data, meta, cfg, 8).params == a.params);

  const ChannelSet tiny(data.begin(), data.begin() + 50);
  CHECK_THROWS_AS(meta_train(tiny, meta, cfg, 7), ArgumentError);
}

TEST_CASE("meta_train reduces the query loss") {
  const SystemConfig cfg = SystemConfig::with_snr(3, 3, 10.0);
  const MetaConfig base;
  for (std::uint64_t seed : {1, 2, 3}) {
    Rng rng = Rng::stream(seed, 1);
    const ChannelSet data =
        make_mixed_dataset(rng, parse_channel_mix("rayleigh@0.5, rician:3@0.5"), 500, 3, 3);
    MetaConfig meta = base;
    meta.epochs = 50;
    const auto res = meta_train(data, meta, cfg, seed);
    CHECK(res.log.epochs.back().query_loss < res.log.epochs.front().query_loss);
  }
}

TEST_CASE("unsupervised_train") {
  const SystemConfig cfg = SystemConfig::with_snr(3, 3, 10.0);
  MetaConfig meta;
  meta.unsup_epochs = 0;
  Rng rng(9);
  const ChannelSet data = draw(rng, ChannelModelSpec::rayleigh(), 200);
  CHECK(unsupervised_train(data, meta, cfg, 3).params == initial_params(cfg, 3));

  meta.unsup_epochs = 50;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto res = unsupervised_train(data, meta, cfg, seed);
    CHECK(res.log.epochs.back().support_loss < res.log.epochs.front().support_loss);
  }
  CHECK(unsupervised_train(data, meta, cfg, 1).params == unsupervised_train(data, meta, cfg, 1).params);
  CHECK_THROWS_AS(unsupervised_train({}, meta, cfg, 1), ArgumentError);
}

TEST_CASE("unsupervised training overfits a single sample") {
  const SystemConfig cfg = SystemConfig::with_snr(3, 3, 10.0);
  Rng rng(10);
  const ChannelSet one = draw(rng, ChannelModelSpec::rayleigh(), 1);
  Rng wrng(11);
  const double reference = sum_rate_loss(one[0], wmmse_solve(one[0], cfg, wrng).v, cfg);
  MetaConfig meta;
  meta.unsup_epochs = 3000;
  const auto res = unsupervised_train(one, meta, cfg, 4);
  const double reached = predictor_loss(res.params, one, cfg);
  CHECK(reached <= 0.9 * reference);
}

TEST_CASE("adapt_stream evaluates before adapting") {
  const SystemConfig cfg = SystemConfig::with_snr(2, 2, 10.0);
  const MetaConfig meta;
  Rng rng(12);
  std::vector<ChannelSet> stream;
  for (int s = 0; s < 3; ++s) stream.push_back(draw(rng, ChannelModelSpec::rayleigh(), 4, 2));
  const PredictorParams phi = initial_params(cfg, 12);
  const auto res = adapt_stream(phi, stream, meta.inner_lr, 1, cfg, meta);
  REQUIRE(res.wsr.size() == 3);
  CHECK(res.wsr[0] == evaluate_wsr(phi, stream[0], cfg));
  const PredictorParams after1 = adapt_on_test(phi, stream[0], meta.inner_lr, 1, cfg, meta);
  CHECK(res.wsr[1] == evaluate_wsr(after1, stream[1], cfg));
  for (const auto& slot : res.wsr)
    for (double w : slot) CHECK(w >= 0.0);
}
