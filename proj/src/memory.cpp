#include "mml/memory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "mml/errors.hpp"

namespace mml {

std::size_t MemoryConfig::fresh_slots(std::size_t fresh_count) const {
  const auto reserve = static_cast<std::size_t>(std::ceil(static_cast<double>(capacity) * fresh_fraction));
  return std::min({fresh_count, reserve, capacity});
}

ChannelSet MemorySet::samples() const {
  ChannelSet out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.sample);
  return out;
}

Scorer make_scorer(const PredictorParams& params, const SystemConfig& cfg, const PredictorOptions& opts) {
  return [&params, &cfg, opts](std::span<const ChannelRealization> batch) {
    return per_sample_losses(params, batch, cfg, opts);
  };
}

MemorySet score_entries(MemorySet mem, const Scorer& scorer) {
  if (mem.entries.empty()) return mem;
  const ChannelSet batch = mem.samples();
  const std::vector<double> losses = scorer(batch);
  for (std::size_t i = 0; i < mem.entries.size(); ++i) mem.entries[i].last_loss = losses.at(i);
  return mem;
}

MemorySet score_entries(MemorySet mem, const PredictorParams& params, const SystemConfig& cfg,
                        const PredictorOptions& opts) {
  return score_entries(std::move(mem), make_scorer(params, cfg, opts));
}

std::vector<std::size_t> rank_hardest(std::span<const MemoryEntry> entries, std::size_t count) {
  std::vector<std::size_t> idx(entries.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const std::size_t take = std::min(count, idx.size());
  auto harder = [&](std::size_t a, std::size_t b) {
    const auto& ea = entries[a];
    const auto& eb = entries[b];
    if (ea.last_loss != eb.last_loss) return ea.last_loss > eb.last_loss;
    if (ea.inserted_at != eb.inserted_at) return ea.inserted_at > eb.inserted_at;
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(), harder);
  idx.resize(take);
  return idx;
}

MemorySet update_memory(MemorySet mem, std::span<const ChannelRealization> fresh, std::size_t t,
                        const Scorer& scorer) {
  const MemoryConfig& cfg = mem.config;
  if (cfg.capacity == 0) {
    mem.entries.clear();
    return mem;
  }
  const std::size_t admitted = cfg.fresh_slots(fresh.size());
  const std::size_t first_admitted = fresh.size() - admitted;

  std::vector<MemoryEntry> pool = std::move(mem.entries);
  if (cfg.rank_pool == RankPool::union_) {
    for (std::size_t i = 0; i < first_admitted; ++i) pool.push_back({fresh[i], 0.0, t, mem.next_id++});
  }
  if (!pool.empty()) {
    MemorySet scored;
    scored.entries = std::move(pool);
    pool = score_entries(std::move(scored), scorer).entries;
  }
  std::vector<std::size_t> keep = rank_hardest(pool, cfg.capacity - admitted);
  std::sort(keep.begin(), keep.end());

  std::vector<MemoryEntry> next;
  next.reserve(cfg.capacity);
  for (std::size_t i : keep) next.push_back(std::move(pool[i]));
  for (std::size_t i = first_admitted; i < fresh.size(); ++i) next.push_back({fresh[i], 0.0, t, mem.next_id++});
  mem.entries = std::move(next);
  return score_entries(std::move(mem), scorer);
}

MemorySet update_memory(MemorySet mem, std::span<const ChannelRealization> fresh, std::size_t t,
                        const PredictorParams& params, const SystemConfig& cfg, const PredictorOptions& opts) {
  return update_memory(std::move(mem), fresh, t, make_scorer(params, cfg, opts));
}

StreamResult mml_test_loop(const PredictorParams& phi, std::span<const ChannelSet> stream, const MetaConfig& meta,
                           const SystemConfig& cfg, const MemoryConfig& mem_cfg,
                           const std::function<void(std::size_t, const MemorySet&)>& on_slot) {
  StreamResult result{phi, {}, {}};
  MemorySet memory;
  memory.config = mem_cfg;
  std::size_t t = 0;
  for (const ChannelSet& slot : stream) {
    ++t;
    result.wsr.push_back(evaluate_wsr(result.params, slot, cfg, meta.predictor));

    ChannelSet batch = memory.samples();
    batch.insert(batch.end(), slot.begin(), slot.end());
    result.params = adapt_on_test(result.params, batch, meta.inner_lr, mem_cfg.adapt_steps, cfg, meta);

    memory = update_memory(std::move(memory), slot, t, result.params, cfg, meta.predictor);
    if (memory.size() > mem_cfg.capacity) throw std::logic_error("memory exceeded its capacity");
    result.memory_sizes.push_back(memory.size());
    if (on_slot) on_slot(t, memory);
  }
  return result;
}

void dump_memory(const std::filesystem::path& path, const MemorySet& mem) {
  write_dataset(path, mem.samples());
  std::filesystem::path csv = path;
  csv += ".csv";
  std::ofstream os(csv, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + csv.string() + "' for writing");
  os << "index,loss,inserted_at\n" << std::setprecision(17);
  for (std::size_t i = 0; i < mem.entries.size(); ++i) {
    os << i << ',' << mem.entries[i].last_loss << ',' << mem.entries[i].inserted_at << '\n';
  }
}

}  // namespace mml
