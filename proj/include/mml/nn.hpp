#pragma once

// Multilayer perceptrons on the autodiff tape, first-order optimizers and a
// finite-difference gradient checker.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mml/autodiff.hpp"
#include "mml/rng.hpp"

namespace mml {

/// Layer widths [in, hidden..., out]. Hidden layers use ReLU, the output
/// layer is affine.
struct MlpLayout {
  std::vector<std::size_t> sizes;

  std::size_t input_dim() const { return sizes.front(); }
  std::size_t output_dim() const { return sizes.back(); }
  std::size_t num_layers() const { return sizes.size() - 1; }
  /// Per layer: weights (out x in, row-major) then bias.
  std::size_t param_count() const;

  friend bool operator==(const MlpLayout&, const MlpLayout&) = default;
};

struct MlpParams {
  MlpLayout layout;
  std::vector<double> values;
};

/// Parameter leaves of one MLP, bound to a region of a flat parameter vector.
struct MlpNodes {
  std::vector<ad::NodeId> weights;
  std::vector<ad::NodeId> biases;
  std::vector<std::size_t> sizes;
};

MlpNodes bind_mlp(ad::Tape& tape, const MlpLayout& layout, std::span<const double> params, std::size_t offset);
ad::NodeId mlp_forward(ad::Tape& tape, const MlpNodes& net, ad::NodeId x);
ad::NodeId mlp_forward(const MlpParams& params, std::span<const double> x, ad::Tape& tape);

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
void glorot_init(const MlpLayout& layout, std::span<double> out, Rng& rng);

struct AdamState {
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam step; advances state.t.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, double lr);

/// params -= lr * grads.
void sgd_step(std::span<double> params, std::span<const double> grads, double lr);

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so that coordinates whose true
  /// derivative is ~0 are judged on absolute error.
  double abs_floor = 1e-6;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  /// Coordinates where the +-step probes landed in different smooth pieces
  /// (e.g. a ReLU switched), so a central difference is meaningless.
  std::size_t skipped = 0;
  bool passed = true;
};

/// Function under test. When `region` is non-null it receives a signature of
/// the piecewise-smooth region the point lies in.
using ProbeFn = std::function<double(std::span<const double> params, std::vector<std::uint8_t>* region)>;

/// Compares `analytic` against central differences on every coordinate.
GradCheckReport finite_diff_check(const ProbeFn& f, std::span<const double> params, std::span<const double> analytic,
                                  const GradCheckOptions& opts = {});

}  // namespace mml
