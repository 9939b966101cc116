#pragma once
// Input- and aggregation-side transformations around a frozen model, shared
// by every reprogramming method. Learnable pieces are tape Vars so that one
// backward pass yields their gradients while the model stays constant.

#include <cstddef>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "gnnr/meta_graph.hpp"
#include "gnnr/model.hpp"
#include "gnnr/padding.hpp"

namespace gnnr {

/// Message structure of a graph as the model sees it, optionally already
/// wired to `num_meta_nodes` meta nodes.
struct PreparedGraph {
  Tensor features;
  MessageList messages;
  Tensor edge_weights;  // 1 x num_slots
  std::size_t num_meta_nodes = 0;
};

PreparedGraph prepare_graph(const Graph& g, const ModelParams& params, std::size_t num_meta_nodes = 0);

struct TapeProgram {
  /// Padding layout; `delta` holds its (1 x pad_size) values.
  const PaddingSpec* padding = nullptr;
  Var delta;
  /// Additive (1 x feat_dim) perturbation shared by all nodes.
  Var perturbation;
  /// (num_meta_nodes x feat_dim); requires a graph prepared with meta nodes.
  Var meta_features;
  /// Replaces the prepared edge weights (1 x num_slots).
  Var edge_weights;
  /// Empty: the model's own aggregator.
  AggregationPlan plan;
};

/// x -> (x + perturbation) -> padded -> stacked with meta features -> model.
Var program_forward(Tape& tape, const BoundModel& model, const PreparedGraph& graph,
                    const TapeProgram& program);

/// Finalized artifacts for inference.
struct Reprogramming {
  const PaddingSpec* padding = nullptr;
  const MetaGraph* meta = nullptr;
  const Tensor* perturbation = nullptr;
  std::optional<Aggregator> aggregator;
};

Tensor reprogrammed_forward(const FrozenModel& model, const Graph& g, const Reprogramming& r);

/// Builds a scalar loss from the tape parameter holding the artifact.
using Objective = std::function<Var(Tape& tape, const Var& artifact)>;

/// Full-batch gradient descent on `value`. Returns the loss at every
/// evaluated value, initial first and the returned value last; stops after
/// opt.epochs steps or once the relative improvement drops below
/// opt.early_stop. Throws NumericError on a non-finite loss.
std::vector<double> descend(Tensor& value, const ReprogramOptions& opt, std::string_view where,
                            const Objective& objective);

}  // namespace gnnr
