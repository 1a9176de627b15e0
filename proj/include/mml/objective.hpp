#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mml/channels.hpp"
#include "mml/linalg.hpp"

namespace mml {

/// Which interference term the training loss uses. `interference` measures the
/// interference received at user i (|h_i^H v_j|^2, j != i), matching the SINR
/// definition. `own_power` sums the other users' own signal powers
/// (|h_j^H v_j|^2, j != i) instead.
enum class LossVariant { interference, own_power };

struct SystemConfig {
  std::size_t antennas = 3;  // N
  std::size_t users = 3;     // K
  double sigma2 = 1.0;
  double power = 1.0;  // P, linear
  std::vector<double> alpha{1.0, 1.0, 1.0};
  LossVariant loss_variant = LossVariant::interference;

  /// Unit weights, sigma2 = 1 and P = 10^(snr_db/10).
  static SystemConfig with_snr(std::size_t antennas, std::size_t users, double snr_db);

  /// Throws ArgumentError when an invariant does not hold.
  void validate() const;
};

/// N x K beamforming matrix; column k serves user k.
using Beamformer = CMat;

/// Matrix of gains G(k, j) = h_k^H v_j.
CMat channel_gains(const ChannelRealization& h, const Beamformer& v);

double sinr(const ChannelRealization& h, const Beamformer& v, const SystemConfig& cfg, std::size_t k);

/// Weighted sum rate in bits/s/Hz.
double wsr(const ChannelRealization& h, const Beamformer& v, const SystemConfig& cfg);

/// -(1/K) sum_i ln(1 + SINR_i); natural log.
double sum_rate_loss(const ChannelRealization& h, const Beamformer& v, const SystemConfig& cfg);

using BeamformerPredictor = std::function<Beamformer(const ChannelRealization&)>;

/// Mean sum_rate_loss over a non-empty batch.
double batch_loss(std::span<const ChannelRealization> batch, const BeamformerPredictor& predictor,
                  const SystemConfig& cfg);

}  // namespace mml
