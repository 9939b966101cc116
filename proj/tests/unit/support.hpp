#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gnnr/graph.hpp"
#include "gnnr/rng.hpp"
#include "gnnr/tensor.hpp"

namespace gnnr::test {

inline Tensor random_tensor(std::size_t rows, std::size_t cols, SplitMix64& rng, double scale = 1.0) {
  Tensor t(rows, cols);
  for (auto& v : t.data()) v = rng.normal(0.0, scale);
  return t;
}

/// Erdos-Renyi graph with uniform (0.1, 1) weights, class labels and 60/20/20
/// masks. Every node lands in at least one mask.
inline Graph random_graph(std::size_t n, std::size_t feat_dim, double p, SplitMix64& rng,
                          std::size_t num_classes = 2, bool directed = false) {
  Graph g;
  g.num_nodes = n;
  g.directed = directed;
  g.features = random_tensor(n, feat_dim, rng);
  for (std::uint32_t u = 0; u < n; ++u) {
    for (std::uint32_t v = directed ? 0 : u + 1; v < n; ++v) {
      if (u == v || !rng.bernoulli(p)) continue;
      g.edges.push_back({u, v});
      g.edge_weights.push_back(rng.uniform(0.1, 1.0));
    }
  }
  std::vector<std::int64_t> labels(n);
  for (auto& l : labels) l = static_cast<std::int64_t>(rng.below(num_classes));
  g.node_labels = labels;
  Masks m;
  m.train.assign(n, false);
  m.val.assign(n, false);
  m.test.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = static_cast<double>(i) / static_cast<double>(n);
    (r < 0.6 ? m.train : r < 0.8 ? m.val : m.test)[i] = true;
  }
  g.masks = m;
  return g;
}

inline GraphDataset single_graph_dataset(Graph g, std::size_t num_classes) {
  GraphDataset ds;
  ds.task_kind = TaskKind::node_classification;
  ds.num_classes = num_classes;
  ds.graphs.push_back(std::move(g));
  return ds;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gnnr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace gnnr::test
