#include "gnnr/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gnnr/errors.hpp"
#include "gnnr/rng.hpp"

namespace gnnr {

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "unknown";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(name) + "'");
}

std::string_view to_string(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::node_classification:
      return "node-classification";
    case TaskKind::node_regression:
      return "node-regression";
    case TaskKind::graph_classification:
      return "graph-classification";
    case TaskKind::graph_regression:
      return "graph-regression";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
  for (const auto k : {TaskKind::node_classification, TaskKind::node_regression,
                       TaskKind::graph_classification, TaskKind::graph_regression}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("unknown task_kind '" + std::string(name) + "'");
}

bool is_graph_level(TaskKind kind) noexcept {
  return kind == TaskKind::graph_classification || kind == TaskKind::graph_regression;
}

bool is_classification(TaskKind kind) noexcept {
  return kind == TaskKind::node_classification || kind == TaskKind::graph_classification;
}

const std::vector<std::size_t>& DatasetSplit::operator[](Split s) const noexcept {
  switch (s) {
    case Split::train:
      return train;
    case Split::val:
      return val;
    case Split::test:
      break;
  }
  return test;
}

void Graph::validate() const {
  if (features.rows() != num_nodes) {
    throw ValidationError("features: expected " + std::to_string(num_nodes) + " rows, got " +
                          std::to_string(features.rows()));
  }
  if (num_nodes > 0 && features.cols() == 0) throw ValidationError("features: zero feature dimension");
  if (!features.all_finite()) throw ValidationError("features: contains NaN or Inf");
  for (const auto& e : edges) {
    if (e.source >= num_nodes) throw ValidationError("edges: edge source out of range");
    if (e.target >= num_nodes) throw ValidationError("edges: edge target out of range");
  }
  if (edge_weights.size() != edges.size()) {
    throw ValidationError("edge_weights: length " + std::to_string(edge_weights.size()) +
                          " does not match " + std::to_string(edges.size()) + " edges");
  }
  for (const double w : edge_weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("edge_weights: weight outside [0, 1]");
  }
  if (node_labels) {
    const std::size_t n = std::visit([](const auto& v) { return v.size(); }, *node_labels);
    if (n != num_nodes) throw ValidationError("node_labels: length does not match num_nodes");
    if (const auto* reals = std::get_if<std::vector<double>>(&*node_labels)) {
      for (const double v : *reals)
        if (!std::isfinite(v)) throw ValidationError("node_labels: contains NaN or Inf");
    }
  }
  if (masks) {
    if (masks->train.size() != num_nodes || masks->val.size() != num_nodes ||
        masks->test.size() != num_nodes) {
      throw ValidationError("masks: length does not match num_nodes");
    }
    for (std::size_t i = 0; i < num_nodes; ++i) {
      if (int(masks->train[i]) + int(masks->val[i]) + int(masks->test[i]) > 1) {
        throw ValidationError("masks: node " + std::to_string(i) + " is in more than one mask");
      }
    }
  }
}

std::size_t GraphDataset::feat_dim() const {
  if (graphs.empty()) throw ValidationError("graphs: dataset is empty");
  return graphs.front().feat_dim();
}

void GraphDataset::validate() const {
  if (graphs.empty()) throw ValidationError("graphs: dataset is empty");
  const std::size_t dim = graphs.front().feat_dim();
  for (const auto& g : graphs) {
    g.validate();
    if (g.feat_dim() != dim) throw ValidationError("graphs: feature dimensions differ across graphs");
  }
  if (graph_level()) {
    if (!graph_labels) throw ValidationError("graph_labels: required for graph-level tasks");
    if (graph_labels->size() != graphs.size()) {
      throw ValidationError("graph_labels: length does not match number of graphs");
    }
    std::vector<int> seen(graphs.size(), 0);
    for (const auto* part : {&split.train, &split.val, &split.test}) {
      for (const auto i : *part) {
        if (i >= graphs.size()) throw ValidationError("split: graph index out of range");
        if (++seen[i] > 1) throw ValidationError("split: graph " + std::to_string(i) + " appears twice");
      }
    }
  } else {
    if (graph_labels) throw ValidationError("graph_labels: only allowed for graph-level tasks");
    if (graphs.size() != 1) throw ValidationError("graphs: node-level tasks hold exactly one graph");
  }
  if (is_classification(task_kind) && num_classes && *num_classes == 0) {
    throw ValidationError("num_classes: must be positive");
  }
}

MessageList build_messages(const Graph& g, bool self_loops) {
  MessageList ml;
  ml.num_nodes = g.num_nodes;
  ml.num_slots = g.edges.size();
  ml.messages.reserve(g.edges.size() * (g.directed ? 1 : 2) + (self_loops ? g.num_nodes : 0));
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& edge = g.edges[e];
    const auto slot = static_cast<std::int64_t>(e);
    ml.messages.push_back({edge.source, edge.target, slot});
    if (!g.directed && edge.source != edge.target) {
      ml.messages.push_back({edge.target, edge.source, slot});
    }
  }
  if (self_loops) {
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      const auto id = static_cast<std::uint32_t>(v);
      ml.messages.push_back({id, id, Message::kUnitWeight});
    }
  }
  return ml;
}

std::vector<std::size_t> mask_indices(const Graph& g, Split split) {
  if (!g.masks) throw ValidationError("masks: graph has no masks");
  const auto& m = split == Split::train ? g.masks->train
                  : split == Split::val ? g.masks->val
                                        : g.masks->test;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) out.push_back(i);
  return out;
}

namespace {

DatasetSplit split_indices(std::size_t n, double train, double val, double test,
                           std::uint64_t seed) {
  const double total = train + val + test;
  if (train < 0 || val < 0 || test < 0 || std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("fractions: must be nonnegative and sum to 1");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  auto rng = substream(seed, "split");
  shuffle(std::span<std::size_t>(perm), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(val * static_cast<double>(n) + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(test * static_cast<double>(n) + 1e-9));
  const std::size_t n_train = n - n_val - n_test;
  DatasetSplit s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
               perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  return s;
}

}  // namespace

GraphDataset split_dataset(const GraphDataset& ds, double train, double val, double test,
                           std::uint64_t seed) {
  GraphDataset out = ds;
  if (ds.graph_level()) {
    out.split = split_indices(ds.graphs.size(), train, val, test, seed);
    return out;
  }
  if (ds.graphs.size() != 1) throw ValidationError("graphs: node-level tasks hold exactly one graph");
  Graph& g = out.graphs.front();
  const DatasetSplit s = split_indices(g.num_nodes, train, val, test, seed);
  Masks m{std::vector<bool>(g.num_nodes), std::vector<bool>(g.num_nodes),
          std::vector<bool>(g.num_nodes)};
  for (const auto i : s.train) m.train[i] = true;
  for (const auto i : s.val) m.val[i] = true;
  for (const auto i : s.test) m.test[i] = true;
  g.masks = std::move(m);
  out.split = {};
  return out;
}

Graph induced_subgraph(const Graph& g, std::span<const std::size_t> nodes) {
  constexpr auto kAbsent = static_cast<std::size_t>(-1);
  std::vector<std::size_t> remap(g.num_nodes, kAbsent);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] >= g.num_nodes) throw ValidationError("nodes: index out of range");
    remap[nodes[i]] = i;
  }
  Graph out;
  out.num_nodes = nodes.size();
  out.directed = g.directed;
  out.features = Tensor(nodes.size(), g.feat_dim());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    std::copy_n(g.features.row(nodes[i]).begin(), g.feat_dim(), out.features.row(i).begin());
  }
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto s = remap[g.edges[e].source];
    const auto t = remap[g.edges[e].target];
    if (s == kAbsent || t == kAbsent) continue;
    out.edges.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(t)});
    out.edge_weights.push_back(g.edge_weights[e]);
  }
  if (g.node_labels) {
    out.node_labels = std::visit(
        [&](const auto& labels) -> NodeLabels {
          std::decay_t<decltype(labels)> picked;
          picked.reserve(nodes.size());
          for (const auto i : nodes) picked.push_back(labels[i]);
          return picked;
        },
        *g.node_labels);
  }
  return out;
}

GraphDataset select_classes(const GraphDataset& ds, std::span<const std::int64_t> classes,
                            std::uint64_t seed) {
  if (ds.task_kind != TaskKind::node_classification || ds.graphs.size() != 1) {
    throw ValidationError("select_classes: needs a single-graph node-classification dataset");
  }
  const Graph& g = ds.graphs.front();
  if (!g.node_labels || !std::holds_alternative<std::vector<std::int64_t>>(*g.node_labels)) {
    throw ValidationError("node_labels: class labels required");
  }
  const auto& labels = std::get<std::vector<std::int64_t>>(*g.node_labels);
  std::vector<std::size_t> keep;
  std::vector<std::int64_t> relabel;
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    const auto it = std::find(classes.begin(), classes.end(), labels[v]);
    if (it == classes.end()) continue;
    keep.push_back(v);
    relabel.push_back(static_cast<std::int64_t>(it - classes.begin()));
  }
  if (keep.empty()) throw ValidationError("select_classes: no node has a selected class");
  GraphDataset out;
  out.task_kind = ds.task_kind;
  out.num_classes = classes.size();
  Graph sub = induced_subgraph(g, keep);
  sub.node_labels = std::move(relabel);
  out.graphs.push_back(std::move(sub));
  return split_dataset(out, 0.6, 0.2, 0.2, seed);
}

}  // namespace gnnr
