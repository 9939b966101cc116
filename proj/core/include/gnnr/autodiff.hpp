#pragma once

// Reverse-mode differentiation over dense Tensors.
//
// A Tape records every operation as a node holding its forward value and a
// backward closure. Nodes are appended in evaluation order, so the tape index
// is a topological order; Tape::backward walks it once in reverse.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "gnnr/aggregator.hpp"
#include "gnnr/tensor.hpp"

namespace gnnr {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Shape shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient is populated by backward().
  Var parameter(Tensor value);

  /// Record an op result. The node requires grad iff any parent does; the
  /// backward closure only runs for such nodes.
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  /// Seed d(loss)/d(loss) = 1 and propagate. Gradients accumulate across
  /// calls; call zero_grad() in between when reusing a tape.
  void backward(const Var& loss);
  void zero_grad();

  const Tensor& value(const Var& v) const { return nodes_[v.id_].value; }
  bool requires_grad(const Var& v) const { return nodes_[v.id_].requires_grad; }
  /// Gradient of a requires-grad node; zeros if backward never reached it.
  Tensor grad(const Var& v) const;

  /// Adds g into v's gradient buffer (no-op when v does not require grad).
  void accumulate(const Var& v, const Tensor& g);
  /// Mutable gradient buffer for in-place accumulation by op closures.
  /// Returns nullptr when v does not require grad.
  Tensor* grad_buffer(const Var& v);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
};

/// One directed message source -> target. `slot` indexes the edge-weight
/// vector, or is kUnitWeight for a constant weight of 1 (self-loops).
struct Message {
  static constexpr std::int64_t kUnitWeight = -1;

  std::uint32_t source = 0;
  std::uint32_t target = 0;
  std::int64_t slot = kUnitWeight;
};

struct MessageList {
  std::size_t num_nodes = 0;
  std::size_t num_slots = 0;
  std::vector<Message> messages;
};

// Elementwise and linear algebra.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
/// a (n x c) + bias (1 x c) broadcast over rows; the only broadcast supported.
Var add_row(const Var& a, const Var& bias);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var abs(const Var& a);
Var square(const Var& a);

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);
/// Column means: (n x c) -> (1 x c).
Var mean_rows(const Var& a);

// Row-wise normalizations.
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);

// Structural.
Var concat_cols(const Var& a, const Var& b);
Var concat_rows(const Var& a, const Var& b);
Var concat_rows(std::span<const Var> parts);
/// Output column destination[j] receives input column j; destination must be
/// a permutation of 0..cols-1.
Var permute_cols(const Var& a, std::span<const std::size_t> destination);
/// (1 x c) -> (n x c).
Var broadcast_rows(const Var& row, std::size_t n);
Var gather_rows(const Var& a, std::span<const std::size_t> rows);
Var slice_cols(const Var& a, std::size_t start, std::size_t length);
/// Picks a(rows[k], cols[k]) into a (k x 1) column.
Var select_entries(const Var& a, std::span<const std::size_t> rows,
                   std::span<const std::size_t> cols);

/// out[v] combines { w(u,v) * x[u] : u -> v }.
///  sum:  sum of weighted messages
///  mean: weighted sum divided by the sum of incoming weights (not the
///        neighbor count); zero row when that sum is 0
///  max:  elementwise max over messages with non-zero weight; zero row when
///        none; backward routes to the argmax, ties to the lowest source id
/// Aggregator::attention is rejected here; use attention_aggregate.
Var weighted_neighbor_aggregate(const Var& features, const MessageList& messages,
                                const Var& edge_weights, Aggregator mode);

/// Attention-lite: score(u->v) = leaky_relu(a_src . x[u] + a_dst . x[v], 0.2),
/// coefficient = w(u,v) exp(score) normalized over the messages into v.
/// `attention` is a (1 x 2c) row [a_src || a_dst].
Var attention_aggregate(const Var& features, const MessageList& messages,
                        const Var& edge_weights, const Var& attention);

/// Convex (or arbitrary) combination sum_k weights[k] * parts[k];
/// weights is (1 x K) and every part must share one shape.
Var mix(std::span<const Var> parts, const Var& weights);

/// Forward value is `hard`; the gradient passes to `soft` unchanged.
Var straight_through(const Var& soft, const Tensor& hard);

}  // namespace gnnr
