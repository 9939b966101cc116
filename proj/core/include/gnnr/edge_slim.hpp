#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "gnnr/graph.hpp"
#include "gnnr/loss.hpp"
#include "gnnr/model.hpp"

namespace gnnr {

/// d(training loss)/d(edge weight) for every logical edge of a transductive
/// graph; both directions of an undirected edge share one weight, so their
/// contributions are summed.
std::vector<double> edge_gradients(const FrozenModel& model, const Graph& g, const LossSpec& loss);
/// Same, rejecting graph-level datasets.
std::vector<double> edge_gradients(const FrozenModel& model, const GraphDataset& ds, const LossSpec& loss);

struct SlimStep {
  std::size_t edge_id = 0;  // index into the input graph's edges
  std::uint32_t source = 0;
  std::uint32_t target = 0;
  double gradient = 0.0;
  std::size_t iteration = 0;
};

/// State observed at the start of each gradient evaluation.
struct SlimIteration {
  std::size_t iteration = 0;
  std::size_t num_edges = 0;
  double loss = 0.0;
  double abs_gradient_sum = 0.0;
  std::size_t positive = 0;
};

struct SlimPlan {
  std::vector<SlimStep> steps;
  std::size_t recompute_every = 1;
  std::optional<std::size_t> max_deletions;
  std::vector<SlimIteration> iterations;
};

struct SlimOptions {
  /// Edges deleted per gradient evaluation.
  std::size_t recompute_every = 1;
  std::optional<std::size_t> max_deletions;
};

struct SlimResult {
  Graph graph;
  SlimPlan plan;
};

/// Repeatedly evaluates edge_gradients and deletes up to recompute_every
/// edges with strictly positive gradient, largest first (lower edge id on
/// ties), until none is positive or max_deletions is reached. The input graph
/// is not modified.
SlimResult slim_edges(const FrozenModel& model, const Graph& g, const LossSpec& loss,
                      const SlimOptions& options = {});

/// `edge_id,source,target,gradient,iteration` with a header line.
std::string slim_plan_csv(const SlimPlan& plan);

}  // namespace gnnr
