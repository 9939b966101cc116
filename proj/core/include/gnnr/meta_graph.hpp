#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gnnr/graph.hpp"
#include "gnnr/loss.hpp"
#include "gnnr/model.hpp"
#include "gnnr/padding.hpp"

namespace gnnr {

/// Learnable nodes wired to every node of a downstream graph.
struct MetaGraph {
  Tensor features;  // num_meta_nodes x feat_dim

  std::size_t num_meta_nodes() const noexcept { return features.rows(); }
  std::size_t feat_dim() const noexcept { return features.cols(); }
  bool operator==(const MetaGraph&) const = default;
};

/// Features ~ N(0, init_std^2) from the "meta" substream of `seed`.
MetaGraph make_meta_graph(std::size_t num_meta_nodes, std::size_t feat_dim, std::uint64_t seed,
                          double init_std = 0.01);

/// Appends the meta nodes after the original ones and one undirected weight-1
/// edge between every meta node and every original node (meta-major order).
/// Original features, edges and weights are kept verbatim; meta nodes get no
/// label and are false in every mask. Directed inputs get both directions.
Graph attach_meta_graph(const Graph& g, const MetaGraph& meta);

/// True when the first original.num_nodes nodes of `augmented` induce exactly
/// `original` (features, edges, weights, labels, masks restricted).
bool preserves_original(const Graph& original, const Graph& augmented);

struct MetaGraphResult {
  MetaGraph meta;
  /// Training loss at each evaluated meta feature matrix, initial first.
  std::vector<double> losses;
};

/// Gradient descent on the meta features alone over the training graphs of a
/// graph-level dataset, each augmented by attach_meta_graph.
MetaGraphResult optimize_meta_features(const FrozenModel& model, const GraphDataset& ds,
                                       const MetaGraph& meta, const LossSpec& loss,
                                       const ReprogramOptions& opt);

/// forward(model, attach_meta_graph(g, meta)).
Tensor infer_with_meta_graph(const FrozenModel& model, const Graph& g, const MetaGraph& meta);

std::string meta_graph_to_json(const MetaGraph& meta);
MetaGraph meta_graph_from_json(std::string_view text);

}  // namespace gnnr
