#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mml/linalg.hpp"
#include "mml/rng.hpp"

namespace mml {

/// One draw of the downlink channel: users[k] is the length-N vector h_k from
/// the base station to user k.
struct ChannelRealization {
  std::vector<CVec> users;

  std::size_t num_users() const noexcept { return users.size(); }
  std::size_t num_antennas() const noexcept { return users.empty() ? 0 : users.front().size(); }

  friend bool operator==(const ChannelRealization&, const ChannelRealization&) = default;
};

using ChannelSet = std::vector<ChannelRealization>;

enum class FadingKind { rayleigh, rician, nakagami };

struct ChannelModelSpec {
  FadingKind kind = FadingKind::rayleigh;
  double rician_k_factor = 0.0;  // rician only
  double nakagami_m = 1.0;       // nakagami only

  static ChannelModelSpec rayleigh() { return {}; }
  static ChannelModelSpec rician(double k_factor);
  static ChannelModelSpec nakagami(double m);

  /// "rayleigh", "rician:<kappa>" (kappa defaults to 3) or "nakagami:<m>".
  static ChannelModelSpec parse(const std::string& text);
  std::string to_string() const;

  friend bool operator==(const ChannelModelSpec&, const ChannelModelSpec&) = default;
};

/// A channel distribution mixture: (model, fraction) pairs summing to 1.
using ChannelMix = std::vector<std::pair<ChannelModelSpec, double>>;

/// "rayleigh@0.5, rician:3@0.5"; a bare model means fraction 1.
ChannelMix parse_channel_mix(const std::string& text);
std::string to_string(const ChannelMix& mix);

CVec sample_rayleigh(Rng& rng, std::size_t n);
/// sqrt(k/(k+1)) * 1 + sqrt(1/(k+1)) * g with g ~ CN(0, I); unit power per entry.
CVec sample_rician(Rng& rng, std::size_t n, double k_factor);
/// Envelope r = sqrt(Gamma(m, 1/m)) with uniform phase; unit power per entry.
CVec sample_nakagami(Rng& rng, std::size_t n, double m);

CVec sample_channel_vector(Rng& rng, const ChannelModelSpec& spec, std::size_t n);
ChannelRealization sample_realization(Rng& rng, const ChannelModelSpec& spec, std::size_t antennas,
                                      std::size_t users);

struct Task {
  ChannelSet support;
  ChannelSet query;
};

/// Fresh task with n_s support and n_q query draws from one channel model.
Task make_task(Rng& rng, const ChannelModelSpec& spec, std::size_t n_s, std::size_t n_q, std::size_t antennas,
               std::size_t users);

/// Task drawn from an existing pool without replacement, so support and query
/// never share a sample.
Task make_task(Rng& rng, const ChannelSet& pool, std::size_t n_s, std::size_t n_q);

/// `total` draws where spec i contributes round(fraction_i * total); rounding
/// slack goes to the last spec. The result is shuffled.
ChannelSet make_mixed_dataset(Rng& rng, const ChannelMix& mix, std::size_t total, std::size_t antennas,
                              std::size_t users);

/// Binary dataset: "MMLC1", u32 N, u32 K, u32 count (little-endian), then
/// count*K*N interleaved (re, im) little-endian f64, user-major then antenna.
void write_dataset(const std::filesystem::path& path, const ChannelSet& data);
ChannelSet read_dataset(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_dataset(const ChannelSet& data);
ChannelSet decode_dataset(const std::vector<std::uint8_t>& bytes);

}  // namespace mml
