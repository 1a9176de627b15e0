#include "mml/predictor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

#include "mml/errors.hpp"

namespace mml {
namespace {

constexpr char kMagic[5] = {'M', 'M', 'L', 'P', '1'};

std::vector<double> complex_matrix_column_major(const CMat& v) {
  std::vector<double> out;
  out.reserve(2 * v.size());
  for (std::size_t k = 0; k < v.cols(); ++k)
    for (std::size_t n = 0; n < v.rows(); ++n) {
      out.push_back(v(n, k).real());
      out.push_back(v(n, k).imag());
    }
  return out;
}

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t word) {
  for (int i = 0; i < 8; ++i) {
    h ^= (word >> (8 * i)) & 0xffU;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

PredictorLayout PredictorLayout::make(std::size_t antennas, std::size_t users, std::vector<std::size_t> hidden) {
  if (antennas == 0 || users == 0) throw ArgumentError("predictor layout: N and K must be >= 1");
  PredictorLayout l;
  l.antennas = antennas;
  l.users = users;
  auto sizes = [&](std::size_t out) {
    std::vector<std::size_t> s{4 * antennas * users};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(out);
    return MlpLayout{s};
  };
  l.u_net = sizes(2 * users);
  l.w_net = sizes(users);
  l.mu_net = sizes(1);
  return l;
}

const MlpLayout& PredictorLayout::net(Head h) const {
  switch (h) {
    case Head::u:
      return u_net;
    case Head::w:
      return w_net;
    case Head::mu:
      return mu_net;
  }
  throw ArgumentError("unknown head");
}

std::size_t PredictorLayout::offset(Head h) const {
  switch (h) {
    case Head::u:
      return 0;
    case Head::w:
      return u_net.param_count();
    case Head::mu:
      return u_net.param_count() + w_net.param_count();
  }
  throw ArgumentError("unknown head");
}

std::size_t PredictorLayout::param_count() const {
  return u_net.param_count() + w_net.param_count() + mu_net.param_count();
}

std::span<const double> PredictorParams::net(Head h) const {
  return std::span<const double>(values).subspan(layout.offset(h), layout.net(h).param_count());
}

PredictorParams init_predictor(const PredictorLayout& layout, Rng& rng) {
  PredictorParams p{layout, std::vector<double>(layout.param_count(), 0.0)};
  std::span<double> all(p.values);
  for (Head h : {Head::u, Head::w, Head::mu}) {
    glorot_init(layout.net(h), all.subspan(layout.offset(h), layout.net(h).param_count()), rng);
  }
  // u-net output bias sits at the very end of the u-net block.
  const std::size_t u_end = layout.offset(Head::u) + layout.u_net.param_count();
  for (std::size_t i = 0; i < layout.u_net.output_dim(); ++i) p.values[u_end - 1 - i] = 0.1;
  return p;
}

Beamformer conditioning_beamformer(const ChannelRealization& h, const SystemConfig& cfg, FeatureMode mode) {
  const std::size_t n = h.num_antennas();
  const std::size_t k_users = h.num_users();
  Beamformer v(n, k_users);
  if (mode == FeatureMode::mrt) {
    for (std::size_t k = 0; k < k_users; ++k) v.set_column(k, h.users[k]);
  } else {
    std::uint64_t seed = 0xcbf29ce484222325ULL;
    for (const auto& user : h.users)
      for (const auto& x : user) {
        seed = fnv1a(seed, std::bit_cast<std::uint64_t>(x.real()));
        seed = fnv1a(seed, std::bit_cast<std::uint64_t>(x.imag()));
      }
    Rng rng(seed);
    for (auto& x : v.data()) x = rng.complex_gaussian();
  }
  return normalize_to_power(v, cfg.power);
}

std::vector<double> encode_features(const ChannelRealization& h, const Beamformer& v_current) {
  std::vector<double> x;
  x.reserve(4 * h.num_antennas() * h.num_users());
  for (const auto& user : h.users)
    for (const auto& e : user) {
      x.push_back(e.real());
      x.push_back(e.imag());
    }
  const auto vf = complex_matrix_column_major(v_current);
  x.insert(x.end(), vf.begin(), vf.end());
  return x;
}

BoundPredictor bind_predictor(ad::Tape& tape, const PredictorParams& params) {
  if (params.values.size() != params.layout.param_count()) {
    throw ArgumentError("bind_predictor: parameter vector does not match layout");
  }
  BoundPredictor b;
  b.params = &params;
  b.u_net = bind_mlp(tape, params.layout.u_net, params.values, params.layout.offset(Head::u));
  b.w_net = bind_mlp(tape, params.layout.w_net, params.values, params.layout.offset(Head::w));
  b.mu_net = bind_mlp(tape, params.layout.mu_net, params.values, params.layout.offset(Head::mu));
  return b;
}

ComponentNodes predict_components(ad::Tape& tape, const BoundPredictor& net, const ChannelRealization& h,
                                  const Beamformer& v_current, const SystemConfig& cfg,
                                  const PredictorOptions& opts) {
  const ad::NodeId x = tape.constant(encode_features(h, v_current));
  ComponentNodes c;
  c.u = mlp_forward(tape, net.u_net, x);
  c.w = ad::softplus(tape, mlp_forward(tape, net.w_net, x), 1.0);
  c.mu = ad::softplus(tape, mlp_forward(tape, net.mu_net, x), opts.mu_floor_scale * cfg.sigma2);
  return c;
}

ad::NodeId system_matrix_node(ad::Tape& tape, const ChannelRealization& h, const ComponentNodes& c,
                              const SystemConfig& cfg) {
  const std::size_t n = h.num_antennas();
  const std::size_t k_users = h.num_users();
  const CVec u = ad::unpack(tape.value(c.u));
  const auto w = tape.value(c.w);
  const double mu = tape.scalar(c.mu);
  std::vector<double> coeffs(k_users);
  for (std::size_t k = 0; k < k_users; ++k) coeffs[k] = cfg.alpha.at(k) * std::norm(u[k]) * w[k];
  CMat a = hermitian_rank1_sum(coeffs, h.users, n);
  for (std::size_t i = 0; i < n; ++i) a(i, i) += mu;

  auto channel = std::make_shared<const ChannelRealization>(h);
  const std::vector<double> alpha = cfg.alpha;
  return tape.push(ad::OpKind::custom, ad::pack(a.data()), {c.u, c.w, c.mu},
                   [c, channel, alpha, n, k_users](const ad::Tape& tp, std::span<const double> ga, ad::Adjoints& adj) {
                     const CMat abar = ad::unpack_matrix(ga, n, n);
                     const CVec u = ad::unpack(tp.value(c.u));
                     const auto w = tp.value(c.w);
                     auto gu = adj.of(c.u);
                     auto gw = adj.of(c.w);
                     double trace = 0.0;
                     for (std::size_t i = 0; i < n; ++i) trace += abar(i, i).real();
                     adj.of(c.mu)[0] += trace;
                     for (std::size_t k = 0; k < k_users; ++k) {
                       const CVec& hk = channel->users[k];
                       // Re(h^H Abar h)
                       cplx q = 0.0;
                       for (std::size_t r = 0; r < n; ++r) {
                         cplx row = 0.0;
                         for (std::size_t s = 0; s < n; ++s) row += abar(r, s) * hk[s];
                         q += std::conj(hk[r]) * row;
                       }
                       const double g = q.real();
                       const cplx du = 2.0 * g * alpha[k] * w[k] * u[k];
                       gu[2 * k] += du.real();
                       gu[2 * k + 1] += du.imag();
                       gw[k] += g * alpha[k] * std::norm(u[k]);
                     }
                   });
}

ad::NodeId rhs_node(ad::Tape& tape, const ChannelRealization& h, const ComponentNodes& c, const SystemConfig& cfg) {
  const std::size_t n = h.num_antennas();
  const std::size_t k_users = h.num_users();
  const CVec u = ad::unpack(tape.value(c.u));
  const auto w = tape.value(c.w);
  CMat b(n, k_users);
  for (std::size_t k = 0; k < k_users; ++k) {
    const cplx s = cfg.alpha.at(k) * w[k] * u[k];
    for (std::size_t r = 0; r < n; ++r) b(r, k) = s * h.users[k][r];
  }
  auto channel = std::make_shared<const ChannelRealization>(h);
  const std::vector<double> alpha = cfg.alpha;
  return tape.push(ad::OpKind::custom, ad::pack(b.data()), {c.u, c.w},
                   [c, channel, alpha, n, k_users](const ad::Tape& tp, std::span<const double> gb, ad::Adjoints& adj) {
                     const CMat bbar = ad::unpack_matrix(gb, n, k_users);
                     const CVec u = ad::unpack(tp.value(c.u));
                     const auto w = tp.value(c.w);
                     auto gu = adj.of(c.u);
                     auto gw = adj.of(c.w);
                     for (std::size_t k = 0; k < k_users; ++k) {
                       cplx sbar = 0.0;
                       for (std::size_t r = 0; r < n; ++r) sbar += std::conj(channel->users[k][r]) * bbar(r, k);
                       const double scale = alpha[k] * w[k];
                       gu[2 * k] += scale * sbar.real();
                       gu[2 * k + 1] += scale * sbar.imag();
                       gw[k] += alpha[k] * (std::conj(sbar) * u[k]).real();
                     }
                   });
}

ad::NodeId reconstruct_node(ad::Tape& tape, const ChannelRealization& h, const ComponentNodes& c,
                            const SystemConfig& cfg) {
  const ad::NodeId a = system_matrix_node(tape, h, c, cfg);
  const ad::NodeId b = rhs_node(tape, h, c, cfg);
  return ad::hpd_solve(tape, a, b, h.num_antennas(), h.num_users());
}

ad::NodeId sum_rate_loss_node(ad::Tape& tape, const ChannelRealization& h, ad::NodeId v, const SystemConfig& cfg) {
  const std::size_t n = h.num_antennas();
  const std::size_t k_users = h.num_users();
  const Beamformer vm = ad::unpack_matrix(tape.value(v), n, k_users);
  const double loss = sum_rate_loss(h, vm, cfg);

  auto channel = std::make_shared<const ChannelRealization>(h);
  const double sigma2 = cfg.sigma2;
  const bool own_power = cfg.loss_variant == LossVariant::own_power;
  return tape.push(
      ad::OpKind::custom, {loss}, {v},
      [v, channel, sigma2, own_power, n, k_users](const ad::Tape& tp, std::span<const double> gl, ad::Adjoints& adj) {
        const Beamformer vm = ad::unpack_matrix(tp.value(v), n, k_users);
        const CMat g = channel_gains(*channel, vm);
        const double kinv = 1.0 / static_cast<double>(k_users);
        // d(loss)/d|G(i, j)|^2
        CMat dpow(k_users, k_users);
        std::vector<double> denom(k_users);
        std::vector<double> total(k_users);
        for (std::size_t i = 0; i < k_users; ++i) {
          double d = sigma2;
          for (std::size_t j = 0; j < k_users; ++j)
            if (j != i) d += own_power ? std::norm(g(j, j)) : std::norm(g(i, j));
          denom[i] = d;
          total[i] = d + std::norm(g(i, i));
        }
        for (std::size_t i = 0; i < k_users; ++i) {
          if (own_power) {
            double acc = 1.0 / total[i];
            for (std::size_t l = 0; l < k_users; ++l)
              if (l != i) acc += 1.0 / total[l] - 1.0 / denom[l];
            dpow(i, i) = -kinv * acc;
          } else {
            for (std::size_t j = 0; j < k_users; ++j)
              dpow(i, j) = j == i ? -kinv / total[i] : -kinv * (1.0 / total[i] - 1.0 / denom[i]);
          }
        }
        auto gv = adj.of(v);
        for (std::size_t i = 0; i < k_users; ++i)
          for (std::size_t j = 0; j < k_users; ++j) {
            const double d = dpow(i, j).real();
            if (d == 0.0) continue;
            const cplx gbar = 2.0 * gl[0] * d * g(i, j);
            const CVec& hi = channel->users[i];
            for (std::size_t r = 0; r < n; ++r) {
              const cplx contrib = hi[r] * gbar;
              gv[2 * (r * k_users + j)] += contrib.real();
              gv[2 * (r * k_users + j) + 1] += contrib.imag();
            }
          }
      });
}

ad::NodeId sample_loss(ad::Tape& tape, const BoundPredictor& net, const ChannelRealization& h,
                       const SystemConfig& cfg, const PredictorOptions& opts) {
  const Beamformer v0 = conditioning_beamformer(h, cfg, opts.feature_v);
  const ComponentNodes c = predict_components(tape, net, h, v0, cfg, opts);
  const ad::NodeId x = reconstruct_node(tape, h, c, cfg);
  const ad::NodeId v = ad::normalize_power(tape, x, cfg.power);
  return sum_rate_loss_node(tape, h, v, cfg);
}

ad::NodeId reconstruct_and_loss(ad::Tape& tape, const PredictorParams& params,
                                std::span<const ChannelRealization> batch, const SystemConfig& cfg,
                                const PredictorOptions& opts) {
  if (batch.empty()) throw ArgumentError("reconstruct_and_loss: empty batch");
  const BoundPredictor net = bind_predictor(tape, params);
  std::vector<ad::NodeId> losses;
  losses.reserve(batch.size());
  for (const auto& h : batch) losses.push_back(sample_loss(tape, net, h, cfg, opts));
  return ad::mean(tape, losses);
}

LossAndGradient loss_and_gradient(const PredictorParams& params, std::span<const ChannelRealization> batch,
                                  const SystemConfig& cfg, const PredictorOptions& opts) {
  ad::Tape tape;
  const ad::NodeId loss = reconstruct_and_loss(tape, params, batch, cfg, opts);
  return {tape.scalar(loss), tape.gradient(loss, params.size())};
}

namespace {

std::vector<std::uint8_t> relu_pattern(const ad::Tape& tape) {
  std::vector<std::uint8_t> sig;
  for (ad::NodeId i = 0; i < tape.size(); ++i) {
    if (tape.kind(i) != ad::OpKind::relu) continue;
    for (double x : tape.value(tape.parents(i).front())) sig.push_back(x > 0.0 ? 1 : 0);
  }
  return sig;
}

}  // namespace

double predictor_loss(const PredictorParams& params, std::span<const ChannelRealization> batch,
                      const SystemConfig& cfg, const PredictorOptions& opts, std::vector<std::uint8_t>* signature) {
  ad::Tape tape;
  const double loss = tape.scalar(reconstruct_and_loss(tape, params, batch, cfg, opts));
  if (signature) *signature = relu_pattern(tape);
  return loss;
}

std::vector<double> per_sample_losses(const PredictorParams& params, std::span<const ChannelRealization> batch,
                                      const SystemConfig& cfg, const PredictorOptions& opts) {
  ad::Tape tape;
  const BoundPredictor net = bind_predictor(tape, params);
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& h : batch) out.push_back(tape.scalar(sample_loss(tape, net, h, cfg, opts)));
  return out;
}

ComponentTriple predicted_components(const PredictorParams& params, const ChannelRealization& h,
                                     const SystemConfig& cfg, const PredictorOptions& opts) {
  ad::Tape tape;
  const BoundPredictor net = bind_predictor(tape, params);
  const ComponentNodes c =
      predict_components(tape, net, h, conditioning_beamformer(h, cfg, opts.feature_v), cfg, opts);
  const auto w = tape.value(c.w);
  return {ad::unpack(tape.value(c.u)), std::vector<double>(w.begin(), w.end()), tape.scalar(c.mu)};
}

Beamformer predict_beamformer(const PredictorParams& params, const ChannelRealization& h, const SystemConfig& cfg,
                              const PredictorOptions& opts) {
  ad::Tape tape;
  const BoundPredictor net = bind_predictor(tape, params);
  const ComponentNodes c =
      predict_components(tape, net, h, conditioning_beamformer(h, cfg, opts.feature_v), cfg, opts);
  const ad::NodeId v = ad::normalize_power(tape, reconstruct_node(tape, h, c, cfg), cfg.power);
  return ad::unpack_matrix(tape.value(v), h.num_antennas(), h.num_users());
}

std::vector<std::uint8_t> activation_signature(const PredictorParams& params,
                                               std::span<const ChannelRealization> batch, const SystemConfig& cfg,
                                               const PredictorOptions& opts) {
  std::vector<std::uint8_t> sig;
  predictor_loss(params, batch, cfg, opts, &sig);
  return sig;
}

std::vector<std::uint8_t> encode_checkpoint(const PredictorParams& params) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  auto u32 = [&](std::uint64_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  u32(params.layout.antennas);
  u32(params.layout.users);
  for (Head h : {Head::u, Head::w, Head::mu}) {
    const auto& sizes = params.layout.net(h).sizes;
    u32(sizes.size());
    for (auto s : sizes) u32(s);
  }
  u64(params.values.size());
  for (double v : params.values) u64(std::bit_cast<std::uint64_t>(v));
  return out;
}

PredictorParams decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (bytes.size() - pos < n) throw FormatError(std::string("checkpoint truncated while reading ") + what, pos);
  };
  auto read = [&](int width, const char* what) {
    need(static_cast<std::size_t>(width), what);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += static_cast<std::size_t>(width);
    return v;
  };
  need(sizeof(kMagic), "magic");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw FormatError("bad checkpoint magic", 0);
  pos = sizeof(kMagic);
  PredictorParams p;
  p.layout.antennas = read(4, "antenna count");
  p.layout.users = read(4, "user count");
  for (Head h : {Head::u, Head::w, Head::mu}) {
    const std::size_t at = pos;
    const auto count = read(4, "layer count");
    if (count < 2 || count > 64) throw FormatError("implausible layer count " + std::to_string(count), at);
    MlpLayout layout;
    for (std::uint64_t i = 0; i < count; ++i) layout.sizes.push_back(read(4, "layer size"));
    (h == Head::u ? p.layout.u_net : h == Head::w ? p.layout.w_net : p.layout.mu_net) = layout;
  }
  const std::size_t count_at = pos;
  const auto count = read(8, "value count");
  if (count != p.layout.param_count()) {
    throw FormatError("value count " + std::to_string(count) + " does not match layer sizes (" +
                          std::to_string(p.layout.param_count()) + ")",
                      count_at);
  }
  need(count * 8, "parameter values");
  p.values.resize(count);
  for (auto& v : p.values) v = std::bit_cast<double>(read(8, "parameter value"));
  if (pos != bytes.size()) throw FormatError("trailing bytes after checkpoint", pos);
  return p;
}

void write_checkpoint(const std::filesystem::path& path, const PredictorParams& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

PredictorParams read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::uint64_t parameter_hash(const PredictorParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : params.values) h = fnv1a(h, std::bit_cast<std::uint64_t>(v));
  return h;
}

GradCheckReport pipeline_gradcheck(const SystemConfig& cfg, Rng& rng, std::size_t batch_size,
                                   const PredictorOptions& opts, const GradCheckOptions& check) {
  const auto layout = PredictorLayout::make(cfg.antennas, cfg.users);
  PredictorParams p = init_predictor(layout, rng);
  for (auto& v : p.values) v += 0.05 * rng.normal();
  ChannelSet batch;
  for (std::size_t i = 0; i < batch_size; ++i) {
    batch.push_back(sample_realization(rng, ChannelModelSpec::rayleigh(), cfg.antennas, cfg.users));
  }
  const auto lg = loss_and_gradient(p, batch, cfg, opts);
  const ProbeFn f = [&](std::span<const double> x, std::vector<std::uint8_t>* region) {
    return predictor_loss({layout, {x.begin(), x.end()}}, batch, cfg, opts, region);
  };
  return finite_diff_check(f, p.values, lg.gradient, check);
}

}  // namespace mml
