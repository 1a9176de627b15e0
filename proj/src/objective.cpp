#include "mml/objective.hpp"

#include <cmath>
#include <string>

#include "mml/errors.hpp"

namespace mml {

SystemConfig SystemConfig::with_snr(std::size_t antennas, std::size_t users, double snr_db) {
  SystemConfig cfg;
  cfg.antennas = antennas;
  cfg.users = users;
  cfg.sigma2 = 1.0;
  cfg.power = std::pow(10.0, snr_db / 10.0);
  cfg.alpha.assign(users, 1.0);
  return cfg;
}

void SystemConfig::validate() const {
  if (antennas < 1 || users < 1) throw ArgumentError("system: N and K must be >= 1");
  if (!(sigma2 > 0.0)) throw ArgumentError("system: sigma2 must be > 0");
  if (!(power > 0.0)) throw ArgumentError("system: power must be > 0");
  if (alpha.size() != users) {
    throw ArgumentError("system: expected " + std::to_string(users) + " weights, got " +
                        std::to_string(alpha.size()));
  }
  for (double a : alpha)
    if (!(a > 0.0)) throw ArgumentError("system: weights must be > 0");
}

CMat channel_gains(const ChannelRealization& h, const Beamformer& v) {
  const std::size_t k_users = h.num_users();
  if (v.cols() != k_users) throw ArgumentError("beamformer has " + std::to_string(v.cols()) + " columns for " +
                                               std::to_string(k_users) + " users");
  if (v.rows() != h.num_antennas()) throw ArgumentError("beamformer/channel antenna count mismatch");
  CMat g(k_users, k_users);
  for (std::size_t k = 0; k < k_users; ++k) {
    const CVec& hk = h.users[k];
    for (std::size_t j = 0; j < k_users; ++j) {
      cplx acc = 0.0;
      for (std::size_t n = 0; n < hk.size(); ++n) acc += std::conj(hk[n]) * v(n, j);
      g(k, j) = acc;
    }
  }
  return g;
}

namespace {

double sinr_from_gains(const CMat& g, double sigma2, std::size_t k) {
  double interference = 0.0;
  for (std::size_t j = 0; j < g.cols(); ++j)
    if (j != k) interference += std::norm(g(k, j));
  return std::norm(g(k, k)) / (sigma2 + interference);
}

}  // namespace

double sinr(const ChannelRealization& h, const Beamformer& v, const SystemConfig& cfg, std::size_t k) {
  if (k >= h.num_users()) throw ArgumentError("sinr: user index out of range");
  return sinr_from_gains(channel_gains(h, v), cfg.sigma2, k);
}

double wsr(const ChannelRealization& h, const Beamformer& v, const SystemConfig& cfg) {
  const CMat g = channel_gains(h, v);
  double total = 0.0;
  for (std::size_t k = 0; k < g.rows(); ++k) total += cfg.alpha.at(k) * std::log2(1.0 + sinr_from_gains(g, cfg.sigma2, k));
  return total;
}

double sum_rate_loss(const ChannelRealization& h, const Beamformer& v, const SystemConfig& cfg) {
  const CMat g = channel_gains(h, v);
  const std::size_t k_users = g.rows();
  double acc = 0.0;
  for (std::size_t i = 0; i < k_users; ++i) {
    double denom = cfg.sigma2;
    for (std::size_t j = 0; j < k_users; ++j) {
      if (j == i) continue;
      denom += cfg.loss_variant == LossVariant::interference ? std::norm(g(i, j)) : std::norm(g(j, j));
    }
    acc += std::log1p(std::norm(g(i, i)) / denom);
  }
  return -acc / static_cast<double>(k_users);
}

double batch_loss(std::span<const ChannelRealization> batch, const BeamformerPredictor& predictor,
                  const SystemConfig& cfg) {
  if (batch.empty()) throw ArgumentError("batch_loss: empty batch");
  double acc = 0.0;
  for (const auto& h : batch) acc += sum_rate_loss(h, predictor(h), cfg);
  return acc / static_cast<double>(batch.size());
}

}  // namespace mml
