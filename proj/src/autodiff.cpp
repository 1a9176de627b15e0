#include "mml/autodiff.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "mml/errors.hpp"

namespace mml::ad {

NodeId Tape::constant(std::vector<double> value) {
  nodes_.push_back({OpKind::constant, std::move(value), {}, {}, -1, {}});
  return nodes_.size() - 1;
}

NodeId Tape::parameter(std::span<const double> params, std::size_t offset, std::size_t size) {
  if (offset + size > params.size()) throw ArgumentError("Tape::parameter: range outside parameter vector");
  nodes_.push_back(
      {OpKind::parameter, {}, {}, {}, static_cast<std::ptrdiff_t>(offset), params.subspan(offset, size)});
  return nodes_.size() - 1;
}

NodeId Tape::push(OpKind kind, std::vector<double> value, std::vector<NodeId> parents, Backward backward) {
  for (NodeId p : parents)
    if (p >= nodes_.size()) throw ArgumentError("Tape::push: parent does not exist");
  nodes_.push_back({kind, std::move(value), std::move(parents), std::move(backward), -1, {}});
  return nodes_.size() - 1;
}

double Tape::scalar(NodeId id) const {
  const auto v = value(id);
  if (v.size() != 1) throw ArgumentError("Tape::scalar: node is not scalar");
  return v[0];
}

Adjoints Tape::sweep(NodeId loss) const {
  if (value(loss).size() != 1) throw ArgumentError("Tape::gradient: loss node is not scalar");
  Adjoints adj;
  adj.adj_.resize(loss + 1);
  for (NodeId i = 0; i <= loss; ++i) adj.adj_[i].assign(nodes_[i].view().size(), 0.0);
  adj.adj_[loss][0] = 1.0;
  for (NodeId i = loss + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!node.backward) continue;
    const auto self = adj.adj_[i];
    bool nonzero = false;
    for (double g : self) nonzero = nonzero || g != 0.0;
    if (!nonzero) continue;
    node.backward(*this, self, adj);
  }
  return adj;
}

std::vector<double> Tape::gradient(NodeId loss, std::size_t param_count) const {
  Adjoints adj = sweep(loss);
  std::vector<double> grad(param_count, 0.0);
  for (NodeId i = 0; i <= loss; ++i) {
    const Node& node = nodes_[i];
    if (node.param_offset < 0) continue;
    const auto off = static_cast<std::size_t>(node.param_offset);
    if (off + node.external.size() > param_count) throw ArgumentError("Tape::gradient: parameter count too small");
    const auto g = adj.adj_[i];
    for (std::size_t j = 0; j < g.size(); ++j) grad[off + j] += g[j];
  }
  return grad;
}

std::vector<std::vector<double>> Tape::adjoints(NodeId loss) const { return sweep(loss).adj_; }

NodeId affine(Tape& t, NodeId w, NodeId b, NodeId x, std::size_t rows, std::size_t cols) {
  const auto wv = t.value(w);
  const auto bv = t.value(b);
  const auto xv = t.value(x);
  if (wv.size() != rows * cols || bv.size() != rows || xv.size() != cols) {
    throw ArgumentError("affine: shape mismatch (W " + std::to_string(wv.size()) + ", b " + std::to_string(bv.size()) +
                        ", x " + std::to_string(xv.size()) + " for " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ")");
  }
  std::vector<double> y(bv.begin(), bv.end());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = wv.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * xv[c];
    y[r] += acc;
  }
  return t.push(OpKind::affine, std::move(y), {w, b, x},
                [w, b, x, rows, cols](const Tape& tp, std::span<const double> gy, Adjoints& adj) {
                  const auto wv = tp.value(w);
                  const auto xv = tp.value(x);
                  auto gw = adj.of(w);
                  auto gb = adj.of(b);
                  auto gx = adj.of(x);
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double g = gy[r];
                    if (g == 0.0) continue;
                    gb[r] += g;
                    const double* row = wv.data() + r * cols;
                    double* grow = gw.data() + r * cols;
                    for (std::size_t c = 0; c < cols; ++c) {
                      grow[c] += g * xv[c];
                      gx[c] += g * row[c];
                    }
                  }
                });
}

NodeId relu(Tape& t, NodeId x) {
  std::vector<double> y(t.value(x).begin(), t.value(x).end());
  for (auto& v : y) v = v > 0.0 ? v : 0.0;
  return t.push(OpKind::relu, std::move(y), {x}, [x](const Tape& tp, std::span<const double> gy, Adjoints& adj) {
    const auto xv = tp.value(x);
    auto gx = adj.of(x);
    for (std::size_t i = 0; i < gy.size(); ++i)
      if (xv[i] > 0.0) gx[i] += gy[i];
  });
}

namespace {

double softplus_value(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

NodeId softplus(Tape& t, NodeId x, double shift) {
  std::vector<double> y(t.value(x).begin(), t.value(x).end());
  for (auto& v : y) v = softplus_value(v) + shift;
  return t.push(OpKind::softplus, std::move(y), {x}, [x](const Tape& tp, std::span<const double> gy, Adjoints& adj) {
    const auto xv = tp.value(x);
    auto gx = adj.of(x);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * sigmoid(xv[i]);
  });
}

NodeId add(Tape& t, NodeId a, NodeId b) {
  const auto av = t.value(a);
  const auto bv = t.value(b);
  if (av.size() != bv.size()) throw ArgumentError("add: shape mismatch");
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return t.push(OpKind::add, std::move(y), {a, b}, [a, b](const Tape&, std::span<const double> gy, Adjoints& adj) {
    auto ga = adj.of(a);
    auto gb = adj.of(b);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      ga[i] += gy[i];
      gb[i] += gy[i];
    }
  });
}

NodeId mul(Tape& t, NodeId a, NodeId b) {
  const auto av = t.value(a);
  const auto bv = t.value(b);
  if (av.size() != bv.size()) throw ArgumentError("mul: shape mismatch");
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return t.push(OpKind::mul, std::move(y), {a, b}, [a, b](const Tape& tp, std::span<const double> gy, Adjoints& adj) {
    const auto av = tp.value(a);
    const auto bv = tp.value(b);
    auto ga = adj.of(a);
    auto gb = adj.of(b);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      ga[i] += gy[i] * bv[i];
      gb[i] += gy[i] * av[i];
    }
  });
}

NodeId sum(Tape& t, NodeId x) {
  double acc = 0.0;
  for (double v : t.value(x)) acc += v;
  return t.push(OpKind::sum, {acc}, {x}, [x](const Tape&, std::span<const double> gy, Adjoints& adj) {
    for (auto& g : adj.of(x)) g += gy[0];
  });
}

NodeId mean(Tape& t, std::span<const NodeId> scalars) {
  if (scalars.empty()) throw ArgumentError("mean: no inputs");
  double acc = 0.0;
  for (NodeId s : scalars) acc += t.scalar(s);
  const double inv = 1.0 / static_cast<double>(scalars.size());
  std::vector<NodeId> parents(scalars.begin(), scalars.end());
  return t.push(OpKind::mean, {acc * inv}, parents,
                [parents, inv](const Tape&, std::span<const double> gy, Adjoints& adj) {
                  for (NodeId p : parents) adj.of(p)[0] += gy[0] * inv;
                });
}

std::vector<double> pack(std::span<const cplx> z) {
  std::vector<double> out(2 * z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[2 * i] = z[i].real();
    out[2 * i + 1] = z[i].imag();
  }
  return out;
}

CVec unpack(std::span<const double> re_im) {
  if (re_im.size() % 2 != 0) throw ArgumentError("unpack: odd length");
  CVec z(re_im.size() / 2);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = {re_im[2 * i], re_im[2 * i + 1]};
  return z;
}

CMat unpack_matrix(std::span<const double> re_im, std::size_t rows, std::size_t cols) {
  if (re_im.size() != 2 * rows * cols) throw ArgumentError("unpack_matrix: size mismatch");
  return CMat(rows, cols, unpack(re_im));
}

NodeId hpd_solve(Tape& t, NodeId a, NodeId b, std::size_t n, std::size_t m) {
  const CMat amat = unpack_matrix(t.value(a), n, n);
  const CMat bmat = unpack_matrix(t.value(b), n, m);
  auto factor = std::make_shared<const HpdFactor>(amat, 0.0);
  auto x = std::make_shared<const CMat>(factor->solve(bmat));
  return t.push(OpKind::hpd_solve, pack(x->data()), {a, b},
                [a, b, n, m, factor, x](const Tape&, std::span<const double> gy, Adjoints& adj) {
                  const CMat xbar = unpack_matrix(gy, n, m);
                  const CMat bbar = factor->solve(xbar);
                  auto gb = adj.of(b);
                  for (std::size_t i = 0; i < n * m; ++i) {
                    gb[2 * i] += bbar.data()[i].real();
                    gb[2 * i + 1] += bbar.data()[i].imag();
                  }
                  // A_bar = -B_bar X^H
                  auto ga = adj.of(a);
                  for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < n; ++c) {
                      cplx acc = 0.0;
                      for (std::size_t k = 0; k < m; ++k) acc += bbar(r, k) * std::conj((*x)(c, k));
                      ga[2 * (r * n + c)] -= acc.real();
                      ga[2 * (r * n + c) + 1] -= acc.imag();
                    }
                });
}

NodeId normalize_power(Tape& t, NodeId x, double power) {
  const auto xv = t.value(x);
  double sq = 0.0;
  for (double v : xv) sq += v * v;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0)) throw DegenerateInputError("normalize_power: input is all-zero");
  const double scale = std::sqrt(power) / norm;
  std::vector<double> y(xv.begin(), xv.end());
  for (auto& v : y) v *= scale;
  return t.push(OpKind::normalize_power, std::move(y), {x},
                [x, norm, scale](const Tape& tp, std::span<const double> gy, Adjoints& adj) {
                  const auto xv = tp.value(x);
                  double dot = 0.0;
                  for (std::size_t i = 0; i < xv.size(); ++i) dot += xv[i] * gy[i];
                  const double proj = dot / (norm * norm);
                  auto gx = adj.of(x);
                  for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += scale * (gy[i] - proj * xv[i]);
                });
}

}  // namespace mml::ad
