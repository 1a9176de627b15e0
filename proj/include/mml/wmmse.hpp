#pragma once

// Classical WMMSE for the MISO broadcast channel, the (u, w, mu) component
// formulas it iterates on, and a grid search over the optimal-structure
// parameterization that serves as an independent reference.

#include <cstddef>
#include <vector>

#include "mml/channels.hpp"
#include "mml/linalg.hpp"
#include "mml/objective.hpp"
#include "mml/rng.hpp"

namespace mml {

/// Low-dimensional description of a beamformer: receiver gains u, MSE
/// weights w (w_k >= 1) and the power multiplier mu (>= 0).
struct ComponentTriple {
  CVec u;
  std::vector<double> w;
  double mu = 0.0;
};

/// Virtual uplink powers lambda and downlink powers p, each summing to P.
struct StructureParams {
  std::vector<double> lambda;
  std::vector<double> p;
};

/// w_k = (sigma2 + sum_j |h_k^H v_j|^2) / (sigma2 + sum_{j!=k} |h_k^H v_j|^2).
std::vector<double> compute_w(const ChannelRealization& h, const Beamformer& v, const SystemConfig& cfg);

/// u_k = h_k^H v_k / (sigma2 + sum_j |h_k^H v_j|^2).
CVec compute_u(const ChannelRealization& h, const Beamformer& v, const SystemConfig& cfg);

/// v_k = alpha_k u_k w_k (S + mu I)^{-1} h_k, S = sum_k alpha_k |u_k|^2 w_k h_k h_k^H.
Beamformer reconstruct_v(const ChannelRealization& h, const ComponentTriple& comps, const SystemConfig& cfg);

/// Smallest mu >= 0 with total power of the reconstruction <= P, located by
/// bisection until P - power <= rel_tol * P. Returns 0 when the constraint is
/// inactive at mu = 0.
double solve_mu(const ChannelRealization& h, const CVec& u, const std::vector<double>& w, const SystemConfig& cfg,
                double rel_tol = 1e-8);

struct WmmseResult {
  Beamformer v;
  /// Components that reconstruct `v`.
  ComponentTriple components;
  std::size_t iterations = 0;
  /// WSR of the starting point followed by the WSR after every iteration.
  std::vector<double> wsr_trace;
};

struct WmmseOptions {
  std::size_t max_iters = 200;
  double eps = 1e-6;
  /// Power tolerance for the inner mu bisection. Looser values make the WSR
  /// trace jitter once the iterates settle.
  double mu_tol = 1e-13;
  /// Independent random starts; the best final WSR wins.
  std::size_t restarts = 1;
  /// Also start from MRT over all users and from MRT to each single user.
  bool structured_starts = true;
};

WmmseResult wmmse_solve(const ChannelRealization& h, const SystemConfig& cfg, Rng& rng,
                        const WmmseOptions& opts = {});

Beamformer structure_beamformer(const ChannelRealization& h, const StructureParams& sp, const SystemConfig& cfg);

struct GridOracleResult {
  Beamformer v;
  double wsr = 0.0;
  StructureParams params;
};

/// Exhaustive search over grid_steps points per simplex dimension for both
/// lambda and p. Supports K <= 3.
GridOracleResult grid_oracle(const ChannelRealization& h, const SystemConfig& cfg, std::size_t grid_steps);

}  // namespace mml
