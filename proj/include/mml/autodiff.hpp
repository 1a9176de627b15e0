#pragma once

// Reverse-mode automatic differentiation over real vectors.
//
// Every node holds a vector-valued forward result and a closure that pushes
// its adjoint into its parents. Nodes are appended in evaluation order, so the
// reverse pass is a single sweep from the loss back to the leaves. Complex
// quantities live on the tape as interleaved (re, im) pairs; their adjoints use
// the same packing, d(loss)/d(re) + i d(loss)/d(im).

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mml/linalg.hpp"

namespace mml::ad {

using NodeId = std::size_t;

enum class OpKind {
  constant,
  parameter,
  affine,
  relu,
  softplus,
  add,
  mul,
  sum,
  mean,
  hpd_solve,
  normalize_power,
  custom,
};

class Tape;

/// Storage for adjoints during a reverse sweep.
class Adjoints {
 public:
  std::span<double> of(NodeId id) { return adj_[id]; }

 private:
  friend class Tape;
  std::vector<std::vector<double>> adj_;
};

using Backward = std::function<void(const Tape& tape, std::span<const double> self_adj, Adjoints& adj)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  NodeId constant(std::vector<double> value);

  /// Leaf bound to params[offset, offset + size) of the flat parameter vector
  /// that gradient() aligns with. The leaf views the caller's storage, which
  /// must outlive the tape and stay unmodified while it is in use.
  NodeId parameter(std::span<const double> params, std::size_t offset, std::size_t size);

  NodeId push(OpKind kind, std::vector<double> value, std::vector<NodeId> parents, Backward backward);

  std::span<const double> value(NodeId id) const { return nodes_.at(id).view(); }
  double scalar(NodeId id) const;
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::vector<NodeId>& parents(NodeId id) const { return nodes_.at(id).parents; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient of a scalar node with respect to the flat parameter vector of
  /// length param_count. Does not modify the tape.
  std::vector<double> gradient(NodeId loss, std::size_t param_count) const;

  /// Adjoints of every node for a scalar loss (used by tests on non-parameter
  /// leaves).
  std::vector<std::vector<double>> adjoints(NodeId loss) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<double> value;
    std::vector<NodeId> parents;
    Backward backward;
    std::ptrdiff_t param_offset = -1;
    std::span<const double> external;  // parameter leaves only

    std::span<const double> view() const { return param_offset >= 0 ? external : std::span<const double>(value); }
  };
  Adjoints sweep(NodeId loss) const;

  std::vector<Node> nodes_;
};

/// y = W x + b, W row-major rows x cols.
NodeId affine(Tape& t, NodeId w, NodeId b, NodeId x, std::size_t rows, std::size_t cols);
NodeId relu(Tape& t, NodeId x);
/// ln(1 + e^x) + shift, elementwise.
NodeId softplus(Tape& t, NodeId x, double shift = 0.0);
NodeId add(Tape& t, NodeId a, NodeId b);
NodeId mul(Tape& t, NodeId a, NodeId b);
/// Sum of all entries of x as a scalar.
NodeId sum(Tape& t, NodeId x);
/// Mean of scalar nodes.
NodeId mean(Tape& t, std::span<const NodeId> scalars);

/// X = A^{-1} B for Hermitian positive definite A (n x n complex) and B
/// (n x m complex). The adjoint is propagated with solves against the same
/// factor: B_bar = A^{-1} X_bar, A_bar = -B_bar X^H.
NodeId hpd_solve(Tape& t, NodeId a, NodeId b, std::size_t n, std::size_t m);

/// Rescales x (a packed complex matrix) to squared Frobenius norm `power`.
NodeId normalize_power(Tape& t, NodeId x, double power);

// Packing helpers for complex values on the tape.
std::vector<double> pack(std::span<const cplx> z);
CVec unpack(std::span<const double> re_im);
CMat unpack_matrix(std::span<const double> re_im, std::size_t rows, std::size_t cols);

}  // namespace mml::ad
