#pragma once

// Neural prediction of the WMMSE components (u, w, mu) and the differentiable
// path channel -> components -> reconstructed beamformer -> sum-rate loss.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mml/autodiff.hpp"
#include "mml/channels.hpp"
#include "mml/nn.hpp"
#include "mml/objective.hpp"
#include "mml/wmmse.hpp"

namespace mml {

enum class Head { u, w, mu };

/// Three independent MLPs sharing one input encoding of length 4NK.
/// Output widths: u-net 2K (re, im pairs), w-net K, mu-net 1.
struct PredictorLayout {
  std::size_t antennas = 0;
  std::size_t users = 0;
  MlpLayout u_net;
  MlpLayout w_net;
  MlpLayout mu_net;

  static PredictorLayout make(std::size_t antennas, std::size_t users, std::vector<std::size_t> hidden = {64, 64});

  std::size_t feature_dim() const { return 4 * antennas * users; }
  const MlpLayout& net(Head h) const;
  std::size_t offset(Head h) const;
  std::size_t param_count() const;

  friend bool operator==(const PredictorLayout&, const PredictorLayout&) = default;
};

/// Flat parameter vector holding theta_u, theta_w and theta_mu back to back.
struct PredictorParams {
  PredictorLayout layout;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  std::span<const double> net(Head h) const;

  friend bool operator==(const PredictorParams&, const PredictorParams&) = default;
};

/// Glorot-uniform weights, zero biases except the u-net output bias (0.1),
/// which keeps the initial reconstruction away from the zero beamformer.
PredictorParams init_predictor(const PredictorLayout& layout, Rng& rng);

/// Beamformer the w/u networks are conditioned on.
enum class FeatureMode {
  mrt,     // maximum-ratio transmission scaled to P
  random,  // complex Gaussian scaled to P, seeded from the channel bits
};

struct PredictorOptions {
  FeatureMode feature_v = FeatureMode::mrt;
  /// mu_floor = mu_floor_scale * sigma2.
  double mu_floor_scale = 1e-4;
};

Beamformer conditioning_beamformer(const ChannelRealization& h, const SystemConfig& cfg, FeatureMode mode);

/// [re/im of h_k entries (user-major) | re/im of V entries (column-major)].
std::vector<double> encode_features(const ChannelRealization& h, const Beamformer& v_current);

struct BoundPredictor {
  const PredictorParams* params = nullptr;
  MlpNodes u_net;
  MlpNodes w_net;
  MlpNodes mu_net;
};

BoundPredictor bind_predictor(ad::Tape& tape, const PredictorParams& params);

struct ComponentNodes {
  ad::NodeId u;   // 2K packed complex
  ad::NodeId w;   // K, each >= 1
  ad::NodeId mu;  // 1, >= mu_floor
};

/// u = raw u-net output, w = 1 + softplus(w-net), mu = softplus(mu-net) + mu_floor.
ComponentNodes predict_components(ad::Tape& tape, const BoundPredictor& net, const ChannelRealization& h,
                                  const Beamformer& v_current, const SystemConfig& cfg,
                                  const PredictorOptions& opts = {});

/// A = sum_k alpha_k |u_k|^2 w_k h_k h_k^H + mu I, packed N x N.
ad::NodeId system_matrix_node(ad::Tape& tape, const ChannelRealization& h, const ComponentNodes& c,
                              const SystemConfig& cfg);
/// B(:, k) = alpha_k w_k u_k h_k, packed N x K.
ad::NodeId rhs_node(ad::Tape& tape, const ChannelRealization& h, const ComponentNodes& c, const SystemConfig& cfg);
/// Unnormalized reconstruction (S + mu I)^{-1} B.
ad::NodeId reconstruct_node(ad::Tape& tape, const ChannelRealization& h, const ComponentNodes& c,
                            const SystemConfig& cfg);
/// Scalar sum-rate loss of a packed N x K beamformer.
ad::NodeId sum_rate_loss_node(ad::Tape& tape, const ChannelRealization& h, ad::NodeId v, const SystemConfig& cfg);

/// Per-sample loss of the full pipeline (predict, reconstruct, normalize to P,
/// sum-rate loss).
ad::NodeId sample_loss(ad::Tape& tape, const BoundPredictor& net, const ChannelRealization& h,
                       const SystemConfig& cfg, const PredictorOptions& opts = {});

/// Batch mean of sample_loss.
ad::NodeId reconstruct_and_loss(ad::Tape& tape, const PredictorParams& params,
                                std::span<const ChannelRealization> batch, const SystemConfig& cfg,
                                const PredictorOptions& opts = {});

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

LossAndGradient loss_and_gradient(const PredictorParams& params, std::span<const ChannelRealization> batch,
                                  const SystemConfig& cfg, const PredictorOptions& opts = {});

/// Batch loss value. When `signature` is non-null it also receives the
/// activation_signature of the same forward pass.
double predictor_loss(const PredictorParams& params, std::span<const ChannelRealization> batch,
                      const SystemConfig& cfg, const PredictorOptions& opts = {},
                      std::vector<std::uint8_t>* signature = nullptr);

std::vector<double> per_sample_losses(const PredictorParams& params, std::span<const ChannelRealization> batch,
                                      const SystemConfig& cfg, const PredictorOptions& opts = {});

/// Component values (no gradient tracking).
ComponentTriple predicted_components(const PredictorParams& params, const ChannelRealization& h,
                                     const SystemConfig& cfg, const PredictorOptions& opts = {});

/// Reconstructed beamformer normalized to total power P.
Beamformer predict_beamformer(const PredictorParams& params, const ChannelRealization& h, const SystemConfig& cfg,
                              const PredictorOptions& opts = {});

/// ReLU on/off pattern of every hidden unit over the batch; constant inside a
/// region where the pipeline is smooth.
std::vector<std::uint8_t> activation_signature(const PredictorParams& params,
                                               std::span<const ChannelRealization> batch, const SystemConfig& cfg,
                                               const PredictorOptions& opts = {});

/// Checkpoint: "MMLP1", u32 N, u32 K, then per network u32 layer-size count and
/// u32 sizes, then u64 value count and little-endian f64 values.
void write_checkpoint(const std::filesystem::path& path, const PredictorParams& params);
PredictorParams read_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const PredictorParams& params);
PredictorParams decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// One random gradient check of the full pipeline: perturbed initial weights
/// and a batch of Rayleigh channels drawn from `rng`.
GradCheckReport pipeline_gradcheck(const SystemConfig& cfg, Rng& rng, std::size_t batch_size = 2,
                                   const PredictorOptions& opts = {}, const GradCheckOptions& check = {});

/// Order-sensitive 64-bit FNV-1a hash of the parameter bits.
std::uint64_t parameter_hash(const PredictorParams& params);

}  // namespace mml
