#pragma once

// First-order MAML over the component predictor, plus the baselines it is
// compared against (plain unsupervised training, adaptation from scratch).

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mml/channels.hpp"
#include "mml/nn.hpp"
#include "mml/objective.hpp"
#include "mml/predictor.hpp"

namespace mml {

/// How per-sample losses are combined into the objective of one gradient step.
enum class LossReduction { sum, mean };

struct MetaConfig {
  double inner_lr = 0.01;   // a
  double outer_lr = 0.001;  // beta
  std::size_t n_s = 40;
  std::size_t n_q = 40;
  std::size_t n_t = 40;
  std::size_t epochs = 200;
  std::size_t inner_steps = 1;
  LossReduction reduction = LossReduction::sum;

  // Unsupervised baseline.
  double unsup_lr = 0.001;
  std::size_t unsup_epochs = 200;
  std::size_t unsup_batch = 40;

  PredictorOptions predictor;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double support_loss = 0.0;
  double query_loss = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Loss and gradient of the reduced objective over a batch.
LossAndGradient batch_objective(const PredictorParams& params, std::span<const ChannelRealization> batch,
                                const SystemConfig& cfg, const MetaConfig& meta);

/// `steps` plain gradient steps theta <- theta - a * grad on the support set.
/// The input is never modified.
PredictorParams inner_adapt(const PredictorParams& theta, std::span<const ChannelRealization> support, double a,
                            std::size_t steps, const SystemConfig& cfg, const MetaConfig& meta);

/// Test-time adaptation; same mechanics as inner_adapt.
PredictorParams adapt_on_test(const PredictorParams& phi, std::span<const ChannelRealization> batch, double a,
                              std::size_t steps, const SystemConfig& cfg, const MetaConfig& meta);

struct OuterStepStats {
  double support_loss = 0.0;  // mean over tasks, before adaptation
  double query_loss = 0.0;    // mean over tasks, after adaptation
  /// Sum over tasks of the query gradient at each adapted parameter set.
  std::vector<double> meta_gradient;
};

/// First-order meta update: adapt per task on its support set, take the query
/// gradient at the adapted parameters, sum over tasks in order and apply one
/// Adam step with rate outer_lr to phi.
OuterStepStats outer_update(PredictorParams& phi, std::span<const Task> tasks, const MetaConfig& meta,
                            const SystemConfig& cfg, AdamState& adam);

struct TrainResult {
  PredictorParams params;
  TrainLog log;
};

/// Meta-training from init_predictor(stream(seed)); each epoch draws n_t fresh
/// tasks from the dataset pool.
TrainResult meta_train(const ChannelSet& dataset, const MetaConfig& meta, const SystemConfig& cfg,
                       std::uint64_t seed, const EpochCallback& on_epoch = {});

/// Adam on minibatches of the reduced loss over the whole dataset, no task
/// structure.
TrainResult unsupervised_train(const ChannelSet& dataset, const MetaConfig& meta, const SystemConfig& cfg,
                               std::uint64_t seed, const EpochCallback& on_epoch = {});

/// Parameters every training routine starts from for this seed.
PredictorParams initial_params(const SystemConfig& cfg, std::uint64_t seed);

/// Per-sample WSR of the predictor's power-normalized beamformers.
std::vector<double> evaluate_wsr(const PredictorParams& params, std::span<const ChannelRealization> batch,
                                 const SystemConfig& cfg, const PredictorOptions& opts = {});

struct StreamResult {
  PredictorParams params;
  /// Per slot, per sample WSR measured before adapting on that slot.
  std::vector<std::vector<double>> wsr;
  /// Memory occupancy after each slot (all zero without memory).
  std::vector<std::size_t> memory_sizes;
};

/// Plain MAML test-time loop: per slot, evaluate, then adapt on that slot only.
StreamResult adapt_stream(const PredictorParams& phi, std::span<const ChannelSet> stream, double a,
                          std::size_t steps, const SystemConfig& cfg, const MetaConfig& meta);

}  // namespace mml
