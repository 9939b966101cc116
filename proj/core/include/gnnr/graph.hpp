#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "gnnr/autodiff.hpp"
#include "gnnr/tensor.hpp"

namespace gnnr {

struct Edge {
  std::uint32_t source = 0;
  std::uint32_t target = 0;

  bool operator==(const Edge&) const = default;
};

/// Class ids (classification) or real targets (regression), one per node.
using NodeLabels = std::variant<std::vector<std::int64_t>, std::vector<double>>;

struct Masks {
  std::vector<bool> train;
  std::vector<bool> val;
  std::vector<bool> test;

  bool operator==(const Masks&) const = default;
};

enum class Split { train, val, test };
std::string_view to_string(Split split) noexcept;
Split parse_split(std::string_view name);

/// A graph with node features and unary edge weights.
///
/// `edges` holds logical edges. For undirected graphs each logical edge
/// carries messages both ways and owns a single weight, so a gradient with
/// respect to that weight covers both directions.
struct Graph {
  std::size_t num_nodes = 0;
  Tensor features;  // num_nodes x feat_dim
  std::vector<Edge> edges;
  std::vector<double> edge_weights;  // one per edge, in [0, 1]
  std::optional<NodeLabels> node_labels;
  std::optional<Masks> masks;
  bool directed = false;

  std::size_t feat_dim() const noexcept { return features.cols(); }
  std::size_t num_edges() const noexcept { return edges.size(); }

  /// Throws ValidationError naming the offending field.
  void validate() const;

  bool operator==(const Graph&) const = default;
};

enum class TaskKind { node_classification, node_regression, graph_classification, graph_regression };

std::string_view to_string(TaskKind kind) noexcept;
TaskKind parse_task_kind(std::string_view name);
bool is_graph_level(TaskKind kind) noexcept;
bool is_classification(TaskKind kind) noexcept;

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  const std::vector<std::size_t>& operator[](Split s) const noexcept;
  bool operator==(const DatasetSplit&) const = default;
};

/// Transductive tasks hold exactly one graph and split through its masks.
/// Inductive (graph-level) tasks split over graph indices.
struct GraphDataset {
  std::vector<Graph> graphs;
  TaskKind task_kind = TaskKind::node_classification;
  std::optional<std::size_t> num_classes;
  std::optional<std::vector<double>> graph_labels;
  DatasetSplit split;

  bool graph_level() const noexcept { return is_graph_level(task_kind); }
  std::size_t feat_dim() const;

  void validate() const;

  bool operator==(const GraphDataset&) const = default;
};

/// Messages for message passing: every logical edge u->v (and v->u when
/// undirected, unless u == v), followed by one unit-weight self-loop per node
/// when requested. Slots index graph.edge_weights.
MessageList build_messages(const Graph& g, bool self_loops);

/// Node indices selected by the graph's mask for `split`.
std::vector<std::size_t> mask_indices(const Graph& g, Split split);

/// Re-split a dataset. Sizes are floor(fraction * n) for val and test; the
/// remainder goes to train. Indices are assigned from one seeded permutation.
/// For transductive datasets the masks of the single graph are rewritten.
GraphDataset split_dataset(const GraphDataset& ds, double train, double val, double test,
                           std::uint64_t seed);

/// Induced subgraph on `nodes` (in the given order). Edges between kept nodes
/// survive with their weights; labels follow; masks are dropped.
Graph induced_subgraph(const Graph& g, std::span<const std::size_t> nodes);

/// Transductive class-subset task: keep nodes whose class is in `classes`,
/// relabel class classes[i] -> i, and re-split 60/20/20 with `seed`.
GraphDataset select_classes(const GraphDataset& ds, std::span<const std::int64_t> classes,
                            std::uint64_t seed);

}  // namespace gnnr
