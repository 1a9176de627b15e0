#include "mml/wmmse.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "mml/errors.hpp"

namespace mml {
namespace {

// Row sums of |G(k, j)|^2.
std::vector<double> received_power(const CMat& g) {
  std::vector<double> out(g.rows(), 0.0);
  for (std::size_t k = 0; k < g.rows(); ++k)
    for (std::size_t j = 0; j < g.cols(); ++j) out[k] += std::norm(g(k, j));
  return out;
}

CMat build_s(const ChannelRealization& h, const CVec& u, const std::vector<double>& w, const SystemConfig& cfg) {
  const std::size_t k_users = h.num_users();
  if (u.size() != k_users || w.size() != k_users) throw ArgumentError("component length does not match user count");
  std::vector<double> coeffs(k_users);
  for (std::size_t k = 0; k < k_users; ++k) coeffs[k] = cfg.alpha.at(k) * std::norm(u[k]) * w[k];
  return hermitian_rank1_sum(coeffs, h.users, h.num_antennas());
}

Beamformer reconstruct_with(const HpdFactor& factor, const ChannelRealization& h, const CVec& u,
                            const std::vector<double>& w, const SystemConfig& cfg) {
  Beamformer v(h.num_antennas(), h.num_users());
  for (std::size_t k = 0; k < h.num_users(); ++k) {
    CVec x = factor.solve(h.users[k]);
    const cplx scale = cfg.alpha.at(k) * w[k] * u[k];
    for (auto& xi : x) xi *= scale;
    v.set_column(k, x);
  }
  return v;
}

}  // namespace

std::vector<double> compute_w(const ChannelRealization& h, const Beamformer& v, const SystemConfig& cfg) {
  const CMat g = channel_gains(h, v);
  const auto total = received_power(g);
  std::vector<double> w(g.rows());
  for (std::size_t k = 0; k < g.rows(); ++k) {
    const double all = cfg.sigma2 + total[k];
    w[k] = all / (all - std::norm(g(k, k)));
  }
  return w;
}

CVec compute_u(const ChannelRealization& h, const Beamformer& v, const SystemConfig& cfg) {
  const CMat g = channel_gains(h, v);
  const auto total = received_power(g);
  CVec u(g.rows());
  for (std::size_t k = 0; k < g.rows(); ++k) u[k] = g(k, k) / (cfg.sigma2 + total[k]);
  return u;
}

Beamformer reconstruct_v(const ChannelRealization& h, const ComponentTriple& comps, const SystemConfig& cfg) {
  if (comps.mu < 0.0) throw ArgumentError("reconstruct_v: mu must be >= 0");
  const CMat s = build_s(h, comps.u, comps.w, cfg);
  return reconstruct_with(HpdFactor(s, comps.mu), h, comps.u, comps.w, cfg);
}

double solve_mu(const ChannelRealization& h, const CVec& u, const std::vector<double>& w, const SystemConfig& cfg,
                double rel_tol) {
  bool any = false;
  for (const auto& x : u) any = any || std::norm(x) > 0.0;
  if (!any) throw DegenerateInputError("solve_mu: all receiver gains u_k are zero");

  const CMat s = build_s(h, u, w, cfg);
  const double target = cfg.power;
  auto power_at = [&](double mu) {
    try {
      return total_power(reconstruct_with(HpdFactor(s, mu), h, u, w, cfg));
    } catch (const SingularityError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  if (power_at(0.0) <= target) return 0.0;

  // ||(S + mu I)^{-1} b|| <= ||b|| / mu, so this bracket already satisfies the
  // constraint; keep doubling in case rounding says otherwise.
  double rhs_energy = 0.0;
  for (std::size_t k = 0; k < h.num_users(); ++k) {
    rhs_energy += std::norm(cfg.alpha.at(k) * w[k] * u[k]) * norm2_squared(h.users[k]);
  }
  double hi = std::max(std::sqrt(rhs_energy / target), 1e-300);
  double p_hi = power_at(hi);
  while (p_hi > target) {
    hi *= 2.0;
    p_hi = power_at(hi);
  }
  double lo = 0.0;
  for (int it = 0; it < 400; ++it) {
    if (target - p_hi <= rel_tol * target) break;
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double p_mid = power_at(mid);
    if (p_mid > target) {
      lo = mid;
    } else {
      hi = mid;
      p_hi = p_mid;
    }
  }
  return hi;
}

namespace {

Beamformer random_start(const ChannelRealization& h, const SystemConfig& cfg, Rng& rng) {
  Beamformer v(h.num_antennas(), h.num_users());
  for (auto& x : v.data()) x = rng.complex_gaussian();
  return normalize_to_power(v, cfg.power);
}

// MRT columns for the users selected by `mask`, zero elsewhere.
Beamformer mrt_start(const ChannelRealization& h, const SystemConfig& cfg, const std::vector<bool>& mask) {
  Beamformer v(h.num_antennas(), h.num_users());
  for (std::size_t k = 0; k < h.num_users(); ++k) {
    if (mask[k]) v.set_column(k, h.users[k]);
  }
  return normalize_to_power(v, cfg.power);
}

WmmseResult wmmse_from(const ChannelRealization& h, const SystemConfig& cfg, Beamformer v, const WmmseOptions& opts) {
  WmmseResult result;
  result.wsr_trace.push_back(wsr(h, v, cfg));
  double best = -1.0;
  for (std::size_t it = 1; it <= opts.max_iters; ++it) {
    ComponentTriple comps;
    comps.u = compute_u(h, v, cfg);
    comps.w = compute_w(h, v, cfg);
    comps.mu = solve_mu(h, comps.u, comps.w, cfg, opts.mu_tol);
    Beamformer next = reconstruct_v(h, comps, cfg);
    const double change = frobenius_norm(next - v);
    const double rate = wsr(h, next, cfg);
    result.wsr_trace.push_back(rate);
    result.iterations = it;
    if (rate >= best) {
      best = rate;
      result.v = next;
      result.components = std::move(comps);
    }
    v = std::move(next);
    if (change < opts.eps) break;
  }
  return result;
}

}  // namespace

WmmseResult wmmse_solve(const ChannelRealization& h, const SystemConfig& cfg, Rng& rng, const WmmseOptions& opts) {
  if (opts.max_iters < 1) throw ArgumentError("wmmse_solve: max_iters must be >= 1");
  if (!(opts.eps > 0.0)) throw ArgumentError("wmmse_solve: eps must be > 0");
  if (opts.restarts < 1) throw ArgumentError("wmmse_solve: restarts must be >= 1");
  std::vector<Beamformer> starts;
  for (std::size_t r = 0; r < opts.restarts; ++r) starts.push_back(random_start(h, cfg, rng));
  double channel_energy = 0.0;
  for (const auto& hk : h.users) channel_energy += norm2_squared(hk);
  if (opts.structured_starts && channel_energy > 0.0) {
    const std::size_t k_users = h.num_users();
    std::vector<bool> mask(k_users, true);
    starts.push_back(mrt_start(h, cfg, mask));
    for (std::size_t k = 0; k < k_users && k_users > 1; ++k) {
      std::fill(mask.begin(), mask.end(), false);
      mask[k] = true;
      if (norm2_squared(h.users[k]) > 0) starts.push_back(mrt_start(h, cfg, mask));
    }
  }

  WmmseResult best;
  double best_rate = -1.0;
  for (Beamformer& start : starts) {
    WmmseResult next = wmmse_from(h, cfg, std::move(start), opts);
    const double rate = wsr(h, next.v, cfg);
    if (rate > best_rate) {
      best_rate = rate;
      best = std::move(next);
    }
  }
  return best;
}

Beamformer structure_beamformer(const ChannelRealization& h, const StructureParams& sp, const SystemConfig& cfg) {
  const std::size_t k_users = h.num_users();
  const std::size_t n = h.num_antennas();
  if (sp.lambda.size() != k_users || sp.p.size() != k_users) {
    throw ArgumentError("structure_beamformer: parameter length does not match user count");
  }
  std::vector<double> coeffs(k_users);
  for (std::size_t k = 0; k < k_users; ++k) {
    if (sp.lambda[k] < 0.0 || sp.p[k] < 0.0) throw ArgumentError("structure_beamformer: negative power");
    coeffs[k] = sp.lambda[k] / cfg.sigma2;
  }
  const HpdFactor factor(hermitian_rank1_sum(coeffs, h.users, n), 1.0);
  Beamformer v(n, k_users);
  for (std::size_t k = 0; k < k_users; ++k) {
    CVec x = factor.solve(h.users[k]);
    const double norm = std::sqrt(norm2_squared(x));
    const double scale = norm > 0.0 ? std::sqrt(sp.p[k]) / norm : 0.0;
    for (auto& xi : x) xi *= scale;
    v.set_column(k, x);
  }
  return v;
}

namespace {

// All vectors of `parts` non-negative integers summing to `total`, in
// lexicographic order.
void compositions(std::size_t parts, std::size_t total, std::vector<std::size_t>& current,
                  std::vector<std::vector<std::size_t>>& out) {
  if (current.size() + 1 == parts) {
    current.push_back(total);
    out.push_back(current);
    current.pop_back();
    return;
  }
  for (std::size_t i = 0; i <= total; ++i) {
    current.push_back(i);
    compositions(parts, total - i, current, out);
    current.pop_back();
  }
}

}  // namespace

GridOracleResult grid_oracle(const ChannelRealization& h, const SystemConfig& cfg, std::size_t grid_steps) {
  const std::size_t k_users = h.num_users();
  if (k_users > 3) throw CapabilityError("grid_oracle supports at most 3 users, got " + std::to_string(k_users));
  if (grid_steps < 5) throw ArgumentError("grid_oracle: grid_steps must be >= 5");

  std::vector<std::vector<std::size_t>> grid;
  std::vector<std::size_t> scratch;
  compositions(k_users, grid_steps - 1, scratch, grid);
  const double unit = cfg.power / static_cast<double>(grid_steps - 1);

  GridOracleResult best;
  best.wsr = -1.0;
  StructureParams sp;
  sp.lambda.resize(k_users);
  sp.p.resize(k_users);
  for (const auto& lam : grid) {
    for (std::size_t k = 0; k < k_users; ++k) sp.lambda[k] = unit * static_cast<double>(lam[k]);
    // Unit-norm directions depend only on lambda; scale per p below.
    StructureParams dir_params{sp.lambda, std::vector<double>(k_users, 1.0)};
    const Beamformer dirs = structure_beamformer(h, dir_params, cfg);
    for (const auto& pw : grid) {
      Beamformer v = dirs;
      for (std::size_t k = 0; k < k_users; ++k) {
        sp.p[k] = unit * static_cast<double>(pw[k]);
        const double s = std::sqrt(sp.p[k]);
        for (std::size_t n = 0; n < v.rows(); ++n) v(n, k) *= s;
      }
      const double rate = wsr(h, v, cfg);
      if (rate > best.wsr) {
        best.wsr = rate;
        best.v = std::move(v);
        best.params = sp;
      }
    }
  }
  return best;
}

}  // namespace mml
