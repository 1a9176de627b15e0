#include "mml/nn.hpp"

#include <algorithm>
#include <cmath>

#include "mml/errors.hpp"

namespace mml {

std::size_t MlpLayout::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l + 1] * sizes[l] + sizes[l + 1];
  return n;
}

MlpNodes bind_mlp(ad::Tape& tape, const MlpLayout& layout, std::span<const double> params, std::size_t offset) {
  if (layout.sizes.size() < 2) throw ArgumentError("mlp layout needs at least input and output sizes");
  if (offset + layout.param_count() > params.size()) throw ArgumentError("mlp parameters out of range");
  MlpNodes net;
  net.sizes = layout.sizes;
  std::size_t off = offset;
  for (std::size_t l = 0; l < layout.num_layers(); ++l) {
    const std::size_t in = layout.sizes[l];
    const std::size_t out = layout.sizes[l + 1];
    net.weights.push_back(tape.parameter(params, off, out * in));
    off += out * in;
    net.biases.push_back(tape.parameter(params, off, out));
    off += out;
  }
  return net;
}

ad::NodeId mlp_forward(ad::Tape& tape, const MlpNodes& net, ad::NodeId x) {
  if (tape.value(x).size() != net.sizes.front()) {
    throw ArgumentError("mlp_forward: input has " + std::to_string(tape.value(x).size()) + " features, expected " +
                        std::to_string(net.sizes.front()));
  }
  ad::NodeId h = x;
  const std::size_t layers = net.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    h = ad::affine(tape, net.weights[l], net.biases[l], h, net.sizes[l + 1], net.sizes[l]);
    if (l + 1 < layers) h = ad::relu(tape, h);
  }
  return h;
}

ad::NodeId mlp_forward(const MlpParams& params, std::span<const double> x, ad::Tape& tape) {
  if (params.values.size() != params.layout.param_count()) throw ArgumentError("mlp_forward: parameter count mismatch");
  const MlpNodes net = bind_mlp(tape, params.layout, params.values, 0);
  return mlp_forward(tape, net, tape.constant(std::vector<double>(x.begin(), x.end())));
}

void glorot_init(const MlpLayout& layout, std::span<double> out, Rng& rng) {
  if (out.size() != layout.param_count()) throw ArgumentError("glorot_init: output size mismatch");
  std::size_t off = 0;
  for (std::size_t l = 0; l < layout.num_layers(); ++l) {
    const std::size_t in = layout.sizes[l];
    const std::size_t fan_out = layout.sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + fan_out));
    for (std::size_t i = 0; i < in * fan_out; ++i) out[off++] = limit * (2.0 * rng.uniform() - 1.0);
    for (std::size_t i = 0; i < fan_out; ++i) out[off++] = 0.0;
  }
}

void adam_step(AdamState& s, std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != grads.size() || s.m.size() != params.size()) throw ArgumentError("adam_step: size mismatch");
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    const double m_hat = s.m[i] / c1;
    const double v_hat = s.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + s.eps);
  }
}

void sgd_step(std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != grads.size()) throw ArgumentError("sgd_step: size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

GradCheckReport finite_diff_check(const ProbeFn& f, std::span<const double> params, std::span<const double> analytic,
                                  const GradCheckOptions& opts) {
  if (!(opts.step > 0.0)) throw ArgumentError("finite_diff_check: step must be > 0");
  if (params.size() != analytic.size()) throw ArgumentError("finite_diff_check: gradient length mismatch");
  std::vector<double> x(params.begin(), params.end());
  std::vector<std::uint8_t> base_region;
  std::vector<std::uint8_t> plus_region;
  std::vector<std::uint8_t> minus_region;
  f(x, &base_region);

  GradCheckReport report;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + opts.step;
    const double fp = f(x, &plus_region);
    x[i] = orig - opts.step;
    const double fm = f(x, &minus_region);
    x[i] = orig;
    if (plus_region != base_region || minus_region != base_region) {
      ++report.skipped;
      continue;
    }
    const double numeric = (fp - fm) / (2.0 * opts.step);
    const double a = analytic[i];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.abs_floor});
    ++report.checked;
    if (rel > report.max_rel_error || !std::isfinite(rel)) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
  }
  report.passed = report.max_rel_error < opts.tolerance && std::isfinite(report.max_rel_error);
  return report;
}

}  // namespace mml
