#include "mml/meta.hpp"

#include <chrono>

#include "mml/errors.hpp"

namespace mml {
namespace {

// Stream ids keep the randomness of different stages independent.
constexpr std::uint64_t kInitStream = 0x1001;
constexpr std::uint64_t kTaskStream = 0x1002;
constexpr std::uint64_t kShuffleStream = 0x1003;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void MetaConfig::validate() const {
  if (!(inner_lr >= 0.0) || !(outer_lr > 0.0) || !(unsup_lr > 0.0)) throw ArgumentError("meta: learning rates must be positive");
  if (n_s < 1 || n_q < 1 || n_t < 1) throw ArgumentError("meta: n_s, n_q and n_t must be >= 1");
  if (unsup_batch < 1) throw ArgumentError("meta: unsup_batch must be >= 1");
}

LossAndGradient batch_objective(const PredictorParams& params, std::span<const ChannelRealization> batch,
                                const SystemConfig& cfg, const MetaConfig& meta) {
  LossAndGradient lg = loss_and_gradient(params, batch, cfg, meta.predictor);
  if (meta.reduction == LossReduction::sum) {
    const double n = static_cast<double>(batch.size());
    lg.loss *= n;
    for (auto& g : lg.gradient) g *= n;
  }
  return lg;
}

PredictorParams inner_adapt(const PredictorParams& theta, std::span<const ChannelRealization> support, double a,
                            std::size_t steps, const SystemConfig& cfg, const MetaConfig& meta) {
  if (support.empty()) throw ArgumentError("inner_adapt: empty support set");
  PredictorParams out = theta;
  for (std::size_t s = 0; s < steps; ++s) {
    const LossAndGradient lg = batch_objective(out, support, cfg, meta);
    sgd_step(out.values, lg.gradient, a);
  }
  return out;
}

PredictorParams adapt_on_test(const PredictorParams& phi, std::span<const ChannelRealization> batch, double a,
                              std::size_t steps, const SystemConfig& cfg, const MetaConfig& meta) {
  if (batch.empty()) throw ArgumentError("adapt_on_test: empty adaptation batch");
  return inner_adapt(phi, batch, a, steps, cfg, meta);
}

OuterStepStats outer_update(PredictorParams& phi, std::span<const Task> tasks, const MetaConfig& meta,
                            const SystemConfig& cfg, AdamState& adam) {
  if (tasks.empty()) throw ArgumentError("outer_update: no tasks");
  OuterStepStats stats;
  stats.meta_gradient.assign(phi.size(), 0.0);
  for (const Task& task : tasks) {
    stats.support_loss += predictor_loss(phi, task.support, cfg, meta.predictor);
    const PredictorParams adapted = inner_adapt(phi, task.support, meta.inner_lr, meta.inner_steps, cfg, meta);
    const LossAndGradient q = batch_objective(adapted, task.query, cfg, meta);
    stats.query_loss += meta.reduction == LossReduction::sum ? q.loss / static_cast<double>(task.query.size()) : q.loss;
    for (std::size_t i = 0; i < q.gradient.size(); ++i) stats.meta_gradient[i] += q.gradient[i];
  }
  stats.support_loss /= static_cast<double>(tasks.size());
  stats.query_loss /= static_cast<double>(tasks.size());
  adam_step(adam, phi.values, stats.meta_gradient, meta.outer_lr);
  return stats;
}

PredictorParams initial_params(const SystemConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, kInitStream);
  return init_predictor(PredictorLayout::make(cfg.antennas, cfg.users), rng);
}

TrainResult meta_train(const ChannelSet& dataset, const MetaConfig& meta, const SystemConfig& cfg,
                       std::uint64_t seed, const EpochCallback& on_epoch) {
  meta.validate();
  if (meta.epochs > 0 && dataset.size() < meta.n_s + meta.n_q) {
    throw ArgumentError("meta_train: dataset of " + std::to_string(dataset.size()) + " samples cannot form tasks of " +
                        std::to_string(meta.n_s + meta.n_q));
  }
  TrainResult result{initial_params(cfg, seed), {}};
  AdamState adam(result.params.size());
  Rng rng = Rng::stream(seed, kTaskStream);
  for (std::size_t e = 1; e <= meta.epochs; ++e) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<Task> tasks;
    tasks.reserve(meta.n_t);
    for (std::size_t i = 0; i < meta.n_t; ++i) tasks.push_back(make_task(rng, dataset, meta.n_s, meta.n_q));
    const OuterStepStats stats = outer_update(result.params, tasks, meta, cfg, adam);
    result.log.epochs.push_back({e, stats.support_loss, stats.query_loss, seconds_since(start)});
    if (on_epoch) on_epoch(result.log.epochs.back());
  }
  return result;
}

TrainResult unsupervised_train(const ChannelSet& dataset, const MetaConfig& meta, const SystemConfig& cfg,
                               std::uint64_t seed, const EpochCallback& on_epoch) {
  meta.validate();
  if (dataset.empty()) throw ArgumentError("unsupervised_train: empty dataset");
  TrainResult result{initial_params(cfg, seed), {}};
  AdamState adam(result.params.size());
  Rng rng = Rng::stream(seed, kShuffleStream);
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  ChannelSet batch;
  for (std::size_t e = 1; e <= meta.unsup_epochs; ++e) {
    const auto start = std::chrono::steady_clock::now();
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t at = 0; at < order.size(); at += meta.unsup_batch) {
      batch.clear();
      for (std::size_t i = at; i < std::min(order.size(), at + meta.unsup_batch); ++i) batch.push_back(dataset[order[i]]);
      const LossAndGradient lg = loss_and_gradient(result.params, batch, cfg, meta.predictor);
      adam_step(adam, result.params.values, lg.gradient, meta.unsup_lr);
      loss_sum += lg.loss;
      ++batches;
    }
    const double mean_loss = loss_sum / static_cast<double>(batches);
    result.log.epochs.push_back({e, mean_loss, mean_loss, seconds_since(start)});
    if (on_epoch) on_epoch(result.log.epochs.back());
  }
  return result;
}

std::vector<double> evaluate_wsr(const PredictorParams& params, std::span<const ChannelRealization> batch,
                                 const SystemConfig& cfg, const PredictorOptions& opts) {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& h : batch) out.push_back(wsr(h, predict_beamformer(params, h, cfg, opts), cfg));
  return out;
}

StreamResult adapt_stream(const PredictorParams& phi, std::span<const ChannelSet> stream, double a,
                          std::size_t steps, const SystemConfig& cfg, const MetaConfig& meta) {
  StreamResult result{phi, {}, {}};
  for (const ChannelSet& slot : stream) {
    result.wsr.push_back(evaluate_wsr(result.params, slot, cfg, meta.predictor));
    result.params = adapt_on_test(result.params, slot, a, steps, cfg, meta);
    result.memory_sizes.push_back(0);
  }
  return result;
}

}  // namespace mml
