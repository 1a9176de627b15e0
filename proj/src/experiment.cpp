#include "mml/experiment.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "mml/errors.hpp"
#include "mml/stats.hpp"

namespace mml {
namespace {

constexpr std::uint64_t kDatasetStream = 0x2001;
constexpr std::uint64_t kTestStreamBase = 0x3000;
constexpr std::uint64_t kWmmseStreamBase = 0x4000;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    out += f(xs[i]);
  }
  return out;
}

// Value parsers; `where` names the key for error messages.
struct Where {
  std::string key;
  int line;
};

double to_double(const std::string& v, const Where& w) {
  double out = 0.0;
  const auto s = trim(v);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(out)) {
    throw ConfigError(w.key, w.line, "expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& v, const Where& w) {
  std::uint64_t out = 0;
  const auto s = trim(v);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(w.key, w.line, "expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::size_t to_size(const std::string& v, const Where& w) { return static_cast<std::size_t>(to_u64(v, w)); }

bool to_bool(const std::string& v, const Where& w) {
  const auto s = trim(v);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(w.key, w.line, "expected true or false, got '" + v + "'");
}

ChannelMix to_mix(const std::string& v, const Where& w) {
  try {
    return parse_channel_mix(v);
  } catch (const ArgumentError& e) {
    throw ConfigError(w.key, w.line, e.what());
  }
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&, const Where&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::string bool_str(bool b) { return b ? "true" : "false"; }

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  using W = Where;
  using S = std::string;
  static const std::vector<Field> table{
      {"system", "n_antennas", [](C& c, const S& v, const W& w) { c.antennas = to_size(v, w); },
       [](const C& c) { return std::to_string(c.antennas); }},
      {"system", "n_users", [](C& c, const S& v, const W& w) { c.users = to_size(v, w); },
       [](const C& c) { return std::to_string(c.users); }},
      {"system", "sigma2", [](C& c, const S& v, const W& w) { c.sigma2 = to_double(v, w); },
       [](const C& c) { return fmt_double(c.sigma2); }},
      {"system", "alpha",
       [](C& c, const S& v, const W& w) {
         c.alpha.clear();
         for (const auto& x : split_list(v)) c.alpha.push_back(to_double(x, w));
       },
       [](const C& c) { return join<double>(c.alpha, fmt_double); }},
      {"system", "loss_variant",
       [](C& c, const S& v, const W& w) {
         const auto s = trim(v);
         if (s == "interference") c.loss_variant = LossVariant::interference;
         else if (s == "own_power") c.loss_variant = LossVariant::own_power;
         else throw ConfigError(w.key, w.line, "expected interference or own_power, got '" + v + "'");
       },
       [](const C& c) { return S(c.loss_variant == LossVariant::interference ? "interference" : "own_power"); }},

      {"train", "mix", [](C& c, const S& v, const W& w) { c.train_mix = to_mix(v, w); },
       [](const C& c) { return to_string(c.train_mix); }},
      {"train", "dataset_size", [](C& c, const S& v, const W& w) { c.dataset_size = to_size(v, w); },
       [](const C& c) { return std::to_string(c.dataset_size); }},

      {"test", "channel", [](C& c, const S& v, const W& w) { c.test_mix = to_mix(v, w); },
       [](const C& c) { return to_string(c.test_mix); }},
      {"test", "slots", [](C& c, const S& v, const W& w) { c.slots = to_size(v, w); },
       [](const C& c) { return std::to_string(c.slots); }},
      {"test", "samples_per_slot", [](C& c, const S& v, const W& w) { c.samples_per_slot = to_size(v, w); },
       [](const C& c) { return std::to_string(c.samples_per_slot); }},
      {"test", "episodic", [](C& c, const S& v, const W& w) { c.episodic = to_bool(v, w); },
       [](const C& c) { return bool_str(c.episodic); }},
      {"test", "episode_length", [](C& c, const S& v, const W& w) { c.episode_length = to_size(v, w); },
       [](const C& c) { return std::to_string(c.episode_length); }},
      {"test", "final_from_slot", [](C& c, const S& v, const W& w) { c.final_from_slot = to_size(v, w); },
       [](const C& c) { return std::to_string(c.final_from_slot); }},

      {"meta", "inner_lr", [](C& c, const S& v, const W& w) { c.meta.inner_lr = to_double(v, w); },
       [](const C& c) { return fmt_double(c.meta.inner_lr); }},
      {"meta", "outer_lr", [](C& c, const S& v, const W& w) { c.meta.outer_lr = to_double(v, w); },
       [](const C& c) { return fmt_double(c.meta.outer_lr); }},
      {"meta", "n_s", [](C& c, const S& v, const W& w) { c.meta.n_s = to_size(v, w); },
       [](const C& c) { return std::to_string(c.meta.n_s); }},
      {"meta", "n_q", [](C& c, const S& v, const W& w) { c.meta.n_q = to_size(v, w); },
       [](const C& c) { return std::to_string(c.meta.n_q); }},
      {"meta", "n_t", [](C& c, const S& v, const W& w) { c.meta.n_t = to_size(v, w); },
       [](const C& c) { return std::to_string(c.meta.n_t); }},
      {"meta", "epochs", [](C& c, const S& v, const W& w) { c.meta.epochs = to_size(v, w); },
       [](const C& c) { return std::to_string(c.meta.epochs); }},
      {"meta", "inner_steps", [](C& c, const S& v, const W& w) { c.meta.inner_steps = to_size(v, w); },
       [](const C& c) { return std::to_string(c.meta.inner_steps); }},
      {"meta", "reduction",
       [](C& c, const S& v, const W& w) {
         const auto s = trim(v);
         if (s == "sum") c.meta.reduction = LossReduction::sum;
         else if (s == "mean") c.meta.reduction = LossReduction::mean;
         else throw ConfigError(w.key, w.line, "expected sum or mean, got '" + v + "'");
       },
       [](const C& c) { return S(c.meta.reduction == LossReduction::sum ? "sum" : "mean"); }},
      {"meta", "unsup_lr", [](C& c, const S& v, const W& w) { c.meta.unsup_lr = to_double(v, w); },
       [](const C& c) { return fmt_double(c.meta.unsup_lr); }},
      {"meta", "unsup_epochs", [](C& c, const S& v, const W& w) { c.meta.unsup_epochs = to_size(v, w); },
       [](const C& c) { return std::to_string(c.meta.unsup_epochs); }},
      {"meta", "unsup_batch", [](C& c, const S& v, const W& w) { c.meta.unsup_batch = to_size(v, w); },
       [](const C& c) { return std::to_string(c.meta.unsup_batch); }},
      {"meta", "feature_v",
       [](C& c, const S& v, const W& w) {
         const auto s = trim(v);
         if (s == "mrt") c.meta.predictor.feature_v = FeatureMode::mrt;
         else if (s == "random") c.meta.predictor.feature_v = FeatureMode::random;
         else throw ConfigError(w.key, w.line, "expected mrt or random, got '" + v + "'");
       },
       [](const C& c) { return S(c.meta.predictor.feature_v == FeatureMode::mrt ? "mrt" : "random"); }},
      {"meta", "mu_floor_scale",
       [](C& c, const S& v, const W& w) { c.meta.predictor.mu_floor_scale = to_double(v, w); },
       [](const C& c) { return fmt_double(c.meta.predictor.mu_floor_scale); }},

      {"memory", "capacity", [](C& c, const S& v, const W& w) { c.memory.capacity = to_size(v, w); },
       [](const C& c) { return std::to_string(c.memory.capacity); }},
      {"memory", "fresh_fraction", [](C& c, const S& v, const W& w) { c.memory.fresh_fraction = to_double(v, w); },
       [](const C& c) { return fmt_double(c.memory.fresh_fraction); }},
      {"memory", "rank_pool",
       [](C& c, const S& v, const W& w) {
         const auto s = trim(v);
         if (s == "retained") c.memory.rank_pool = RankPool::retained;
         else if (s == "union") c.memory.rank_pool = RankPool::union_;
         else throw ConfigError(w.key, w.line, "expected retained or union, got '" + v + "'");
       },
       [](const C& c) { return S(c.memory.rank_pool == RankPool::retained ? "retained" : "union"); }},
      {"memory", "adapt_steps", [](C& c, const S& v, const W& w) { c.memory.adapt_steps = to_size(v, w); },
       [](const C& c) { return std::to_string(c.memory.adapt_steps); }},

      {"wmmse", "max_iters", [](C& c, const S& v, const W& w) { c.wmmse.max_iters = to_size(v, w); },
       [](const C& c) { return std::to_string(c.wmmse.max_iters); }},
      {"wmmse", "eps", [](C& c, const S& v, const W& w) { c.wmmse.eps = to_double(v, w); },
       [](const C& c) { return fmt_double(c.wmmse.eps); }},
      {"wmmse", "restarts", [](C& c, const S& v, const W& w) { c.wmmse.restarts = to_size(v, w); },
       [](const C& c) { return std::to_string(c.wmmse.restarts); }},
      {"wmmse", "structured_starts", [](C& c, const S& v, const W& w) { c.wmmse.structured_starts = to_bool(v, w); },
       [](const C& c) { return bool_str(c.wmmse.structured_starts); }},

      {"experiment", "snr_db",
       [](C& c, const S& v, const W& w) {
         c.snr_db.clear();
         for (const auto& x : split_list(v)) c.snr_db.push_back(to_double(x, w));
       },
       [](const C& c) { return join<double>(c.snr_db, fmt_double); }},
      {"experiment", "seeds",
       [](C& c, const S& v, const W& w) {
         c.seeds.clear();
         for (const auto& x : split_list(v)) c.seeds.push_back(to_u64(x, w));
       },
       [](const C& c) { return join<std::uint64_t>(c.seeds, [](const std::uint64_t& s) { return std::to_string(s); }); }},
      {"experiment", "methods",
       [](C& c, const S& v, const W& w) {
         c.methods = split_list(v);
         for (const auto& m : c.methods) {
           if (std::find(kAllMethods.begin(), kAllMethods.end(), m) == kAllMethods.end()) {
             throw ConfigError(w.key, w.line, "unknown method '" + m + "'");
           }
         }
       },
       [](const C& c) { return join<std::string>(c.methods, [](const std::string& s) { return s; }); }},
      {"experiment", "output", [](C& c, const S& v, const W&) { c.output = trim(v); },
       [](const C& c) { return c.output.string(); }},
      {"experiment", "json", [](C& c, const S& v, const W& w) { c.json = to_bool(v, w); },
       [](const C& c) { return bool_str(c.json); }},
  };
  return table;
}

const std::vector<std::string> kSections{"system", "train", "test", "meta", "memory", "wmmse", "experiment"};

std::string format_sections(const ExperimentConfig& cfg, const std::vector<std::string>& sections) {
  std::string out;
  for (const auto& section : sections) {
    if (!out.empty()) out += "\n";
    out += "[" + section + "]\n";
    for (const auto& f : fields()) {
      if (f.section == section) out += f.key + " = " + f.get(cfg) + "\n";
    }
  }
  return out;
}

void make_dirs(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

std::string fingerprint(const ExperimentConfig& cfg) {
  const std::string text = format_sections(cfg, {"system", "train", "meta"});
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 8);
}

Rng cell_stream(std::uint64_t seed, std::uint64_t base, double snr_db) {
  return Rng::stream(seed, base).split(std::bit_cast<std::uint64_t>(snr_db + 0.0));
}

bool is_learned(const std::string& method) { return method == "maml" || method == "unsupervised" || method == "mml"; }

std::string trained_method(const std::string& method) { return method == "mml" ? "maml" : method; }

void check_finite(double wsr_value, const std::string& method) {
  if (!std::isfinite(wsr_value)) throw NumericalError(method + ": non-finite weighted sum rate");
}

std::vector<ResultRow> summarize(const std::string& method, double snr_db, std::uint64_t seed,
                                 const std::vector<std::vector<double>>& per_slot, std::size_t final_from_slot) {
  std::vector<ResultRow> rows;
  std::vector<double> pooled;
  for (std::size_t s = 0; s < per_slot.size(); ++s) {
    const auto& w = per_slot[s];
    for (double x : w) check_finite(x, method);
    rows.push_back({method, snr_db, seed, s + 1, stats::mean(w), stats::stddev(w), w.size()});
    if (s + 1 >= final_from_slot) pooled.insert(pooled.end(), w.begin(), w.end());
  }
  rows.push_back({method, snr_db, seed, std::nullopt, stats::mean(pooled), stats::stddev(pooled), pooled.size()});
  return rows;
}

std::string snr_label(double snr_db) { return fmt_double(snr_db); }

}  // namespace

SystemConfig ExperimentConfig::system(double snr) const {
  SystemConfig cfg;
  cfg.antennas = antennas;
  cfg.users = users;
  cfg.sigma2 = sigma2;
  cfg.power = sigma2 * std::pow(10.0, snr / 10.0);
  cfg.alpha = alpha.empty() ? std::vector<double>(users, 1.0) : alpha;
  cfg.loss_variant = loss_variant;
  return cfg;
}

void ExperimentConfig::validate() const {
  if (antennas == 0) throw ConfigError("system.n_antennas", 0, "required key missing or zero");
  if (users == 0) throw ConfigError("system.n_users", 0, "required key missing or zero");
  if (!(sigma2 > 0.0)) throw ConfigError("system.sigma2", 0, "must be > 0");
  if (!alpha.empty()) {
    if (alpha.size() != users) throw ConfigError("system.alpha", 0, "needs one weight per user");
    for (double a : alpha)
      if (!(a > 0.0)) throw ConfigError("system.alpha", 0, "weights must be > 0");
  }
  if (train_mix.empty()) throw ConfigError("train.mix", 0, "empty mixture");
  if (test_mix.empty()) throw ConfigError("test.channel", 0, "empty mixture");
  if (dataset_size == 0) throw ConfigError("train.dataset_size", 0, "must be >= 1");
  if (slots == 0) throw ConfigError("test.slots", 0, "must be >= 1");
  if (samples_per_slot == 0) throw ConfigError("test.samples_per_slot", 0, "must be >= 1");
  if (episode_length == 0) throw ConfigError("test.episode_length", 0, "must be >= 1");
  if (final_from_slot == 0 || final_from_slot > slots) {
    throw ConfigError("test.final_from_slot", 0, "must lie in [1, slots]");
  }
  if (!(meta.inner_lr >= 0.0)) throw ConfigError("meta.inner_lr", 0, "must be >= 0");
  if (!(meta.outer_lr > 0.0)) throw ConfigError("meta.outer_lr", 0, "must be > 0");
  if (!(meta.unsup_lr > 0.0)) throw ConfigError("meta.unsup_lr", 0, "must be > 0");
  if (meta.n_s == 0) throw ConfigError("meta.n_s", 0, "must be >= 1");
  if (meta.n_q == 0) throw ConfigError("meta.n_q", 0, "must be >= 1");
  if (meta.n_t == 0) throw ConfigError("meta.n_t", 0, "must be >= 1");
  if (meta.unsup_batch == 0) throw ConfigError("meta.unsup_batch", 0, "must be >= 1");
  if (!(meta.predictor.mu_floor_scale > 0.0)) throw ConfigError("meta.mu_floor_scale", 0, "must be > 0");
  if (!(memory.fresh_fraction >= 0.0 && memory.fresh_fraction <= 1.0)) {
    throw ConfigError("memory.fresh_fraction", 0, "must lie in [0, 1]");
  }
  if (wmmse.max_iters == 0) throw ConfigError("wmmse.max_iters", 0, "must be >= 1");
  if (!(wmmse.eps > 0.0)) throw ConfigError("wmmse.eps", 0, "must be > 0");
  if (wmmse.restarts == 0) throw ConfigError("wmmse.restarts", 0, "must be >= 1");
  if (snr_db.empty()) throw ConfigError("experiment.snr_db", 0, "empty grid");
  if (seeds.empty()) throw ConfigError("experiment.seeds", 0, "no seeds");
  if (methods.empty()) throw ConfigError("experiment.methods", 0, "no methods");
  if (std::find(methods.begin(), methods.end(), "maml") != methods.end() ||
      std::find(methods.begin(), methods.end(), "mml") != methods.end()) {
    if (meta.epochs > 0 && dataset_size < meta.n_s + meta.n_q) {
      throw ConfigError("train.dataset_size", 0, "smaller than n_s + n_q");
    }
  }
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::map<std::string, const Field*> by_name;
  for (const auto& f : fields()) by_name[f.section + "." + f.key] = &f;

  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(line, line_no, "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (std::find(kSections.begin(), kSections.end(), section) == kSections.end()) {
        throw ConfigError("[" + section + "]", line_no, "unknown section");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line, line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(key, line_no, "key outside of any [section]");
    const std::string name = section + "." + key;
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError(name, line_no, "unknown key");
    it->second->set(cfg, value, {name, line_no});
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string format_config(const ExperimentConfig& cfg) { return format_sections(cfg, kSections); }

std::filesystem::path echo_config(const ExperimentConfig& cfg) {
  make_dirs(cfg.output);
  const auto path = cfg.output / "effective_config.ini";
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << format_config(cfg);
  if (!os) throw IoError("write failed for '" + path.string() + "'");
  return path;
}

void sort_rows(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.snr_db != b.snr_db) return a.snr_db < b.snr_db;
    if (a.seed != b.seed) return a.seed < b.seed;
    // Numbered slots first, "final" last.
    const std::size_t sa = a.slot.value_or(static_cast<std::size_t>(-1));
    const std::size_t sb = b.slot.value_or(static_cast<std::size_t>(-1));
    return sa < sb;
  });
}

std::string format_results_csv(std::vector<ResultRow> rows) {
  sort_rows(rows);
  std::string out = "method,snr_db,seed,slot,wsr_mean,wsr_std,samples\n";
  char buf[256];
  for (const auto& r : rows) {
    const std::string slot = r.slot ? std::to_string(*r.slot) : "final";
    std::snprintf(buf, sizeof buf, "%s,%s,%llu,%s,%.12g,%.12g,%zu\n", r.method.c_str(), snr_label(r.snr_db).c_str(),
                  static_cast<unsigned long long>(r.seed), slot.c_str(), r.wsr_mean, r.wsr_std, r.samples);
    out += buf;
  }
  return out;
}

void emit_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path, bool json) {
  if (rows.empty()) throw ArgumentError("emit_results: no rows");
  if (path.has_parent_path()) make_dirs(path.parent_path());
  {
    std::ofstream os(path, std::ios::trunc | std::ios::binary);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << format_results_csv(rows);
    if (!os) throw IoError("write failed for '" + path.string() + "'");
  }
  if (!json) return;
  std::vector<ResultRow> sorted = rows;
  sort_rows(sorted);
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : sorted) {
    nlohmann::ordered_json o;
    o["method"] = r.method;
    o["snr_db"] = r.snr_db;
    o["seed"] = r.seed;
    if (r.slot) o["slot"] = *r.slot;
    else o["slot"] = "final";
    o["wsr_mean"] = r.wsr_mean;
    o["wsr_std"] = r.wsr_std;
    o["samples"] = r.samples;
    arr.push_back(std::move(o));
  }
  auto json_path = path;
  json_path.replace_extension(".json");
  std::ofstream os(json_path, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot write '" + json_path.string() + "'");
  os << arr.dump(2) << "\n";
}

ChannelSet training_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, kDatasetStream);
  return make_mixed_dataset(rng, cfg.train_mix, cfg.dataset_size, cfg.antennas, cfg.users);
}

std::vector<ChannelSet> test_stream(const ExperimentConfig& cfg, std::uint64_t seed, double snr_db) {
  Rng rng = cell_stream(seed, kTestStreamBase, snr_db);
  std::vector<ChannelSet> stream;
  stream.reserve(cfg.slots);
  for (std::size_t s = 0; s < cfg.slots; ++s) {
    const bool shifted = cfg.episodic && (s / cfg.episode_length) % 2 == 1;
    const ChannelMix& mix = shifted ? cfg.train_mix : cfg.test_mix;
    stream.push_back(make_mixed_dataset(rng, mix, cfg.samples_per_slot, cfg.antennas, cfg.users));
  }
  return stream;
}

std::filesystem::path checkpoint_path(const ExperimentConfig& cfg, const std::string& method, double snr_db,
                                      std::uint64_t seed) {
  return cfg.output / "checkpoints" /
         (method + "_snr" + snr_label(snr_db) + "_seed" + std::to_string(seed) + "_" + fingerprint(cfg) + ".mmlp");
}

std::filesystem::path run_training(const ExperimentConfig& cfg, const std::string& method, double snr_db,
                                   std::uint64_t seed, const ProgressFn& progress) {
  if (method != "maml" && method != "unsupervised") {
    throw UsageError("train: method must be maml or unsupervised, got '" + method + "'");
  }
  cfg.validate();
  const SystemConfig sys = cfg.system(snr_db);
  const ChannelSet data = training_dataset(cfg, seed);
  EpochCallback on_epoch;
  if (progress) {
    on_epoch = [&](const EpochRecord& r) {
      nlohmann::ordered_json o;
      o["method"] = method;
      o["snr_db"] = snr_db;
      o["seed"] = seed;
      o["epoch"] = r.epoch;
      o["support_loss"] = r.support_loss;
      o["query_loss"] = r.query_loss;
      o["seconds"] = r.seconds;
      progress(o.dump());
    };
  }
  const TrainResult res = method == "maml" ? meta_train(data, cfg.meta, sys, seed, on_epoch)
                                           : unsupervised_train(data, cfg.meta, sys, seed, on_epoch);
  for (double v : res.params.values) {
    if (!std::isfinite(v)) throw NumericalError(method + ": training diverged to non-finite parameters");
  }
  const auto path = checkpoint_path(cfg, method, snr_db, seed);
  make_dirs(path.parent_path());
  write_checkpoint(path, res.params);

  auto log_path = path;
  log_path += ".log.csv";
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot write '" + log_path.string() + "'");
  log << "epoch,support_loss,query_loss,seconds\n";
  char buf[160];
  for (const auto& r : res.log.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.12g,%.12g,%.6f\n", r.epoch, r.support_loss, r.query_loss, r.seconds);
    log << buf;
  }
  return path;
}

void train_missing(const ExperimentConfig& cfg, const ProgressFn& progress) {
  std::vector<std::string> needed;
  for (const auto& m : cfg.methods) {
    if (!is_learned(m)) continue;
    const std::string t = trained_method(m);
    if (std::find(needed.begin(), needed.end(), t) == needed.end()) needed.push_back(t);
  }
  std::sort(needed.begin(), needed.end());
  for (const auto& method : needed)
    for (double snr : cfg.snr_db)
      for (std::uint64_t seed : cfg.seeds)
        if (!std::filesystem::exists(checkpoint_path(cfg, method, snr, seed))) run_training(cfg, method, snr, seed, progress);
}

std::vector<ResultRow> run_eval_cell(const ExperimentConfig& cfg, const std::string& method, double snr_db,
                                     std::uint64_t seed) {
  if (std::find(kAllMethods.begin(), kAllMethods.end(), method) == kAllMethods.end()) {
    throw UsageError("eval: unknown method '" + method + "'");
  }
  const SystemConfig sys = cfg.system(snr_db);
  const std::vector<ChannelSet> stream = test_stream(cfg, seed, snr_db);

  PredictorParams params;
  if (is_learned(method)) {
    const auto path = checkpoint_path(cfg, trained_method(method), snr_db, seed);
    if (!std::filesystem::exists(path)) {
      throw UsageError("eval: method '" + method + "' needs checkpoint '" + path.string() + "'; run train first");
    }
    params = read_checkpoint(path);
    if (!(params.layout == PredictorLayout::make(cfg.antennas, cfg.users))) {
      throw UsageError("eval: checkpoint '" + path.string() + "' does not match the configured N and K");
    }
  }

  std::vector<std::vector<double>> per_slot;
  if (method == "wmmse") {
    Rng rng = cell_stream(seed, kWmmseStreamBase, snr_db);
    for (const auto& slot : stream) {
      std::vector<double> w;
      for (const auto& h : slot) {
        const Beamformer v = wmmse_solve(h, sys, rng, cfg.wmmse).v;
        if (total_power(v) > sys.power * (1 + 1e-9)) throw NumericalError("wmmse: beamformer exceeds the power budget");
        w.push_back(wsr(h, v, sys));
      }
      per_slot.push_back(std::move(w));
    }
  } else if (method == "unsupervised") {
    for (const auto& slot : stream) per_slot.push_back(evaluate_wsr(params, slot, sys, cfg.meta.predictor));
  } else if (method == "maml") {
    per_slot = adapt_stream(params, stream, cfg.meta.inner_lr, cfg.memory.adapt_steps, sys, cfg.meta).wsr;
  } else if (method == "maml_no_pretrain") {
    per_slot =
        adapt_stream(initial_params(sys, seed), stream, cfg.meta.inner_lr, cfg.memory.adapt_steps, sys, cfg.meta).wsr;
  } else {
    per_slot = mml_test_loop(params, stream, cfg.meta, sys, cfg.memory).wsr;
  }
  return summarize(method, snr_db, seed, per_slot, cfg.final_from_slot);
}

std::vector<ResultRow> run_eval(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<ResultRow> rows;
  for (const auto& method : cfg.methods)
    for (double snr : cfg.snr_db)
      for (std::uint64_t seed : cfg.seeds) {
        auto cell = run_eval_cell(cfg, method, snr, seed);
        rows.insert(rows.end(), cell.begin(), cell.end());
      }
  sort_rows(rows);
  return rows;
}

ChannelMix figure_test_mix(const std::string& figure_id) {
  if (figure_id == "fig5") return {{ChannelModelSpec::rician(3.0), 1.0}};
  if (figure_id == "fig6") return {{ChannelModelSpec::rayleigh(), 1.0}};
  if (figure_id == "fig7") return {{ChannelModelSpec::nakagami(1.0), 1.0}};
  if (figure_id == "fig8") return {{ChannelModelSpec::nakagami(10.0), 1.0}};
  throw UsageError("figure: unknown figure '" + figure_id + "' (expected fig5, fig6, fig7 or fig8)");
}

std::filesystem::path run_figure(ExperimentConfig cfg, const std::string& figure_id, const ProgressFn& progress) {
  cfg.test_mix = figure_test_mix(figure_id);
  cfg.methods = kAllMethods;
  cfg.validate();
  echo_config(cfg);
  train_missing(cfg, progress);
  const auto rows = run_eval(cfg);
  const auto path = cfg.output / (figure_id + ".csv");
  emit_results(rows, path, cfg.json);
  return path;
}

}  // namespace mml
