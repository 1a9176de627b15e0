#include "mml/channels.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "mml/errors.hpp"

namespace mml {
namespace {

constexpr char kMagic[5] = {'M', 'M', 'L', 'C', '1'};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ArgumentError("cannot parse " + what + " from '" + s + "'");
  }
  if (used != s.size()) throw ArgumentError("cannot parse " + what + " from '" + s + "'");
  return v;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("dataset truncated while reading ") + what, pos_);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

ChannelModelSpec ChannelModelSpec::rician(double k_factor) {
  if (!(k_factor >= 0.0)) throw ArgumentError("rician K-factor must be >= 0");
  ChannelModelSpec s;
  s.kind = FadingKind::rician;
  s.rician_k_factor = k_factor;
  return s;
}

ChannelModelSpec ChannelModelSpec::nakagami(double m) {
  if (!(m >= 0.5)) throw ArgumentError("nakagami m must be >= 0.5");
  ChannelModelSpec s;
  s.kind = FadingKind::nakagami;
  s.nakagami_m = m;
  return s;
}

ChannelModelSpec ChannelModelSpec::parse(const std::string& text) {
  const std::string t = trim(text);
  const auto colon = t.find(':');
  const std::string name = trim(t.substr(0, colon));
  const bool has_arg = colon != std::string::npos;
  const std::string arg = has_arg ? trim(t.substr(colon + 1)) : std::string{};
  if (name == "rayleigh") {
    if (has_arg) throw ArgumentError("rayleigh takes no parameter: '" + text + "'");
    return rayleigh();
  }
  if (name == "rician") return rician(has_arg ? parse_double(arg, "rician K-factor") : 3.0);
  if (name == "nakagami") {
    if (!has_arg) throw ArgumentError("nakagami requires m, e.g. 'nakagami:10'");
    return nakagami(parse_double(arg, "nakagami m"));
  }
  throw ArgumentError("unknown channel model '" + name + "'");
}

std::string ChannelModelSpec::to_string() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind) {
    case FadingKind::rayleigh:
      return "rayleigh";
    case FadingKind::rician:
      os << "rician:" << rician_k_factor;
      return os.str();
    case FadingKind::nakagami:
      os << "nakagami:" << nakagami_m;
      return os.str();
  }
  return "?";
}

ChannelMix parse_channel_mix(const std::string& text) {
  ChannelMix mix;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto at = item.find('@');
    const double fraction = at == std::string::npos ? 1.0 : parse_double(trim(item.substr(at + 1)), "mix fraction");
    mix.emplace_back(ChannelModelSpec::parse(item.substr(0, at)), fraction);
  }
  if (mix.empty()) throw ArgumentError("empty channel mix");
  double sum = 0.0;
  for (const auto& [spec, f] : mix) {
    if (!(f >= 0.0)) throw ArgumentError("negative mix fraction");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ArgumentError("channel mix fractions must sum to 1, got " + std::to_string(sum));
  return mix;
}

std::string to_string(const ChannelMix& mix) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < mix.size(); ++i) {
    if (i) os << ", ";
    os << mix[i].first.to_string() << '@' << mix[i].second;
  }
  return os.str();
}

CVec sample_rayleigh(Rng& rng, std::size_t n) {
  CVec h(n);
  for (auto& x : h) x = rng.complex_gaussian();
  return h;
}

CVec sample_rician(Rng& rng, std::size_t n, double k_factor) {
  if (!(k_factor >= 0.0)) throw ArgumentError("sample_rician: K-factor must be >= 0");
  const double los = std::sqrt(k_factor / (k_factor + 1.0));
  const double scatter = std::sqrt(1.0 / (k_factor + 1.0));
  CVec h(n);
  for (auto& x : h) x = los + scatter * rng.complex_gaussian();
  return h;
}

CVec sample_nakagami(Rng& rng, std::size_t n, double m) {
  if (!(m >= 0.5)) throw ArgumentError("sample_nakagami: m must be >= 0.5");
  CVec h(n);
  for (auto& x : h) {
    const double r = std::sqrt(rng.gamma(m, 1.0 / m));
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    x = std::polar(r, phase);
  }
  return h;
}

CVec sample_channel_vector(Rng& rng, const ChannelModelSpec& spec, std::size_t n) {
  switch (spec.kind) {
    case FadingKind::rayleigh:
      return sample_rayleigh(rng, n);
    case FadingKind::rician:
      return sample_rician(rng, n, spec.rician_k_factor);
    case FadingKind::nakagami:
      return sample_nakagami(rng, n, spec.nakagami_m);
  }
  throw ArgumentError("unknown fading kind");
}

ChannelRealization sample_realization(Rng& rng, const ChannelModelSpec& spec, std::size_t antennas,
                                      std::size_t users) {
  ChannelRealization h;
  h.users.reserve(users);
  for (std::size_t k = 0; k < users; ++k) h.users.push_back(sample_channel_vector(rng, spec, antennas));
  return h;
}

Task make_task(Rng& rng, const ChannelModelSpec& spec, std::size_t n_s, std::size_t n_q, std::size_t antennas,
               std::size_t users) {
  if (n_s == 0 || n_q == 0) throw ArgumentError("make_task: support and query sizes must be >= 1");
  Task task;
  task.support.reserve(n_s);
  task.query.reserve(n_q);
  for (std::size_t i = 0; i < n_s; ++i) task.support.push_back(sample_realization(rng, spec, antennas, users));
  for (std::size_t i = 0; i < n_q; ++i) task.query.push_back(sample_realization(rng, spec, antennas, users));
  return task;
}

Task make_task(Rng& rng, const ChannelSet& pool, std::size_t n_s, std::size_t n_q) {
  if (n_s == 0 || n_q == 0) throw ArgumentError("make_task: support and query sizes must be >= 1");
  if (pool.size() < n_s + n_q) {
    throw ArgumentError("make_task: pool of " + std::to_string(pool.size()) + " samples cannot supply " +
                        std::to_string(n_s + n_q) + " distinct draws");
  }
  // Partial Fisher-Yates over indices: the first n_s + n_q are a uniform sample
  // without replacement.
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const std::size_t need = n_s + n_q;
  for (std::size_t i = 0; i < need; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  Task task;
  for (std::size_t i = 0; i < n_s; ++i) task.support.push_back(pool[idx[i]]);
  for (std::size_t i = n_s; i < need; ++i) task.query.push_back(pool[idx[i]]);
  return task;
}

ChannelSet make_mixed_dataset(Rng& rng, const ChannelMix& mix, std::size_t total, std::size_t antennas,
                              std::size_t users) {
  if (mix.empty()) throw ArgumentError("make_mixed_dataset: empty mix");
  double sum = 0.0;
  for (const auto& [spec, f] : mix) {
    if (!(f >= 0.0)) throw ArgumentError("make_mixed_dataset: negative fraction");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ArgumentError("make_mixed_dataset: fractions sum to " + std::to_string(sum) + ", expected 1");
  }
  ChannelSet out;
  out.reserve(total);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    std::size_t count = i + 1 == mix.size()
                            ? total - assigned
                            : static_cast<std::size_t>(std::llround(mix[i].second * static_cast<double>(total)));
    count = std::min(count, total - assigned);
    for (std::size_t j = 0; j < count; ++j) out.push_back(sample_realization(rng, mix[i].first, antennas, users));
    assigned += count;
  }
  rng.shuffle(out.begin(), out.end());
  return out;
}

std::vector<std::uint8_t> encode_dataset(const ChannelSet& data) {
  const std::uint32_t n = data.empty() ? 0 : static_cast<std::uint32_t>(data.front().num_antennas());
  const std::uint32_t k = data.empty() ? 0 : static_cast<std::uint32_t>(data.front().num_users());
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, n);
  put_u32(out, k);
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  out.reserve(out.size() + data.size() * n * k * 16);
  for (const auto& h : data) {
    if (h.num_users() != k) throw ArgumentError("encode_dataset: inconsistent user count");
    for (const auto& user : h.users) {
      if (user.size() != n) throw ArgumentError("encode_dataset: inconsistent antenna count");
      for (const auto& x : user) {
        put_f64(out, x.real());
        put_f64(out, x.imag());
      }
    }
  }
  return out;
}

ChannelSet decode_dataset(const std::vector<std::uint8_t>& bytes) {
  Reader rd(bytes);
  rd.need(sizeof(kMagic), "magic");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw FormatError("bad dataset magic", 0);
  rd.skip(sizeof(kMagic));
  const std::uint32_t n = rd.u32("antenna count");
  const std::uint32_t k = rd.u32("user count");
  const std::uint32_t count = rd.u32("record count");
  const std::uint64_t payload = static_cast<std::uint64_t>(count) * k * n * 16;
  if (rd.remaining() < payload) {
    throw FormatError("dataset truncated: header promises " + std::to_string(payload) + " payload bytes, " +
                          std::to_string(rd.remaining()) + " present",
                      rd.pos() + rd.remaining());
  }
  if (rd.remaining() > payload) throw FormatError("trailing bytes after dataset payload", rd.pos() + payload);
  ChannelSet out(count);
  for (auto& h : out) {
    h.users.assign(k, CVec(n));
    for (auto& user : h.users)
      for (auto& x : user) {
        const double re = rd.f64("entry");
        const double im = rd.f64("entry");
        x = {re, im};
      }
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const ChannelSet& data) {
  const auto bytes = encode_dataset(data);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

ChannelSet read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

}  // namespace mml
