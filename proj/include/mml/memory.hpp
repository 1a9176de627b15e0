#pragma once

// Loss-ranked replay memory for test-time adaptation. Each slot admits the
// newest test samples and keeps the previously stored samples the model
// currently handles worst, within a fixed capacity.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "mml/channels.hpp"
#include "mml/meta.hpp"
#include "mml/objective.hpp"
#include "mml/predictor.hpp"

namespace mml {

struct MemoryEntry {
  ChannelRealization sample;
  double last_loss = 0.0;
  std::size_t inserted_at = 0;
  std::uint64_t id = 0;
};

/// Which previously stored samples compete for the non-fresh slots.
enum class RankPool {
  retained,  // only entries already in memory
  union_,    // memory entries plus fresh samples not admitted directly
};

struct MemoryConfig {
  std::size_t capacity = 64;  // M
  double fresh_fraction = 0.5;
  RankPool rank_pool = RankPool::retained;
  std::size_t adapt_steps = 1;

  /// pi(t) = min(fresh_count, ceil(capacity * fresh_fraction)).
  std::size_t fresh_slots(std::size_t fresh_count) const;
};

struct MemorySet {
  std::vector<MemoryEntry> entries;
  MemoryConfig config;
  std::uint64_t next_id = 0;

  std::size_t size() const { return entries.size(); }
  ChannelSet samples() const;
};

/// Per-sample losses for a batch under some fixed model.
using Scorer = std::function<std::vector<double>(std::span<const ChannelRealization>)>;

Scorer make_scorer(const PredictorParams& params, const SystemConfig& cfg, const PredictorOptions& opts = {});

/// Recomputes last_loss for every entry.
MemorySet score_entries(MemorySet mem, const Scorer& scorer);
MemorySet score_entries(MemorySet mem, const PredictorParams& params, const SystemConfig& cfg,
                        const PredictorOptions& opts = {});

/// Indices of the `count` largest last_loss values, hardest first. Ties go to
/// the fresher entry (larger inserted_at), then to the lower index. A count
/// above the number of entries returns every index.
std::vector<std::size_t> rank_hardest(std::span<const MemoryEntry> entries, std::size_t count);

/// One memory update at slot t: admit the pi(t) most recent fresh samples,
/// fill the remaining capacity with the hardest entries of the ranking pool
/// (scored by `scorer`), then rescore the result.
MemorySet update_memory(MemorySet mem, std::span<const ChannelRealization> fresh, std::size_t t,
                        const Scorer& scorer);
MemorySet update_memory(MemorySet mem, std::span<const ChannelRealization> fresh, std::size_t t,
                        const PredictorParams& params, const SystemConfig& cfg, const PredictorOptions& opts = {});

/// Test loop with memory: per slot, evaluate on the incoming batch, adapt on
/// memory plus the batch, then update the memory under the adapted model.
/// With capacity 0 this is plain test-time adaptation.
StreamResult mml_test_loop(const PredictorParams& phi, std::span<const ChannelSet> stream, const MetaConfig& meta,
                           const SystemConfig& cfg, const MemoryConfig& mem_cfg,
                           const std::function<void(std::size_t slot, const MemorySet&)>& on_slot = {});

/// Writes the memory samples in the dataset format plus `<path>.csv` with
/// columns index,loss,inserted_at.
void dump_memory(const std::filesystem::path& path, const MemorySet& mem);

}  // namespace mml
