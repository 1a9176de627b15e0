#pragma once

// Experiment orchestration: config files, training and evaluation runs over
// an SNR grid and several seeds, result tables and the four figure presets.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mml/channels.hpp"
#include "mml/memory.hpp"
#include "mml/meta.hpp"
#include "mml/objective.hpp"
#include "mml/wmmse.hpp"

namespace mml {

inline const std::vector<std::string> kAllMethods{"wmmse", "unsupervised", "maml", "maml_no_pretrain", "mml"};

struct ExperimentConfig {
  // [system]
  std::size_t antennas = 0;  // required
  std::size_t users = 0;     // required
  double sigma2 = 1.0;
  std::vector<double> alpha;  // empty means all ones
  LossVariant loss_variant = LossVariant::interference;

  // [train]
  ChannelMix train_mix = parse_channel_mix("rayleigh@0.5, rician:3@0.5");
  std::size_t dataset_size = 500;

  // [test]
  ChannelMix test_mix = parse_channel_mix("rayleigh");
  std::size_t slots = 50;
  std::size_t samples_per_slot = 40;
  bool episodic = false;
  std::size_t episode_length = 10;
  std::size_t final_from_slot = 10;

  MetaConfig meta;
  MemoryConfig memory;
  WmmseOptions wmmse;

  // [experiment]
  std::vector<double> snr_db{0, 5, 10, 15, 20};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::string> methods = kAllMethods;
  std::filesystem::path output = "results";
  bool json = false;

  /// Per-SNR system description.
  SystemConfig system(double snr) const;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

/// Parses `key = value` lines grouped under [system], [train], [test], [meta],
/// [memory], [wmmse] and [experiment]. '#' starts a comment.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Full effective configuration in the same format; parses back to an equal
/// configuration.
std::string format_config(const ExperimentConfig& cfg);

/// Writes format_config to <output>/effective_config.ini.
std::filesystem::path echo_config(const ExperimentConfig& cfg);

struct ResultRow {
  std::string method;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  std::optional<std::size_t> slot;  // empty for the "final" summary row
  double wsr_mean = 0.0;
  double wsr_std = 0.0;
  std::size_t samples = 0;

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

/// Sorts by (method, snr_db, seed, slot) with "final" after the numbered slots.
void sort_rows(std::vector<ResultRow>& rows);

std::string format_results_csv(std::vector<ResultRow> rows);

/// CSV `method,snr_db,seed,slot,wsr_mean,wsr_std,samples`; with `json` also
/// writes the same rows to the path with extension .json.
void emit_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path, bool json = false);

/// Progress sink for long runs: one line per training epoch.
using ProgressFn = std::function<void(const std::string& line)>;

/// Training dataset of one seed; identical for every SNR.
ChannelSet training_dataset(const ExperimentConfig& cfg, std::uint64_t seed);

/// Test stream of one (seed, SNR) cell; identical for every method.
std::vector<ChannelSet> test_stream(const ExperimentConfig& cfg, std::uint64_t seed, double snr_db);

/// <output>/checkpoints/<method>_snr<snr>_seed<seed>_<fingerprint>.mmlp, where
/// the fingerprint covers every setting that influences training.
std::filesystem::path checkpoint_path(const ExperimentConfig& cfg, const std::string& method, double snr_db,
                                      std::uint64_t seed);

/// Trains `method` (maml or unsupervised) for one cell and writes the
/// checkpoint plus a CSV training log next to it.
std::filesystem::path run_training(const ExperimentConfig& cfg, const std::string& method, double snr_db,
                                   std::uint64_t seed, const ProgressFn& progress = {});

/// Trains every learned method in cfg.methods for all cells whose checkpoint
/// is missing.
void train_missing(const ExperimentConfig& cfg, const ProgressFn& progress = {});

/// Evaluates one method on one cell. Learned methods read their checkpoint;
/// a missing checkpoint raises UsageError. Emits one row per slot and a
/// "final" row averaging the slots from final_from_slot on.
std::vector<ResultRow> run_eval_cell(const ExperimentConfig& cfg, const std::string& method, double snr_db,
                                     std::uint64_t seed);

/// All methods over the whole grid, sorted.
std::vector<ResultRow> run_eval(const ExperimentConfig& cfg);

/// Test distribution of a figure preset: fig5 Rician, fig6 Rayleigh, fig7
/// Nakagami m=1, fig8 Nakagami m=10.
ChannelMix figure_test_mix(const std::string& figure_id);

/// Runs all five methods for a figure (training missing checkpoints) and
/// writes <output>/<figure_id>.csv. Returns the CSV path.
std::filesystem::path run_figure(ExperimentConfig cfg, const std::string& figure_id, const ProgressFn& progress = {});

}  // namespace mml
