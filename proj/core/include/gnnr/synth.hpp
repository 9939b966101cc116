#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "gnnr/graph.hpp"

namespace gnnr {

/// How a node's class shows up in its mean feature vector.
enum class ClassSignal {
  /// signal_scale * one-hot(c mod feat_dim)
  one_hot,
  /// signal_scale * c on every coordinate; the class is readable from any
  /// subset of coordinates, so the representation has no preferred layout.
  level,
};

std::string_view to_string(ClassSignal s) noexcept;
ClassSignal parse_class_signal(std::string_view name);

struct SynthTaskSpec {
  std::uint64_t seed = 0;
  TaskKind task_kind = TaskKind::node_classification;
  /// Nodes of the single graph (node-level) or of every graph (graph-level).
  std::size_t num_nodes = 300;
  /// Graph-level tasks only.
  std::size_t num_graphs = 0;
  std::size_t feat_dim = 16;
  std::size_t num_classes = 4;
  /// Stochastic block model edge probabilities. Graph-level tasks draw each
  /// graph as Erdos-Renyi with intra_p.
  double intra_p = 0.05;
  double inter_p = 0.005;
  double noise_std = 1.0;

  ClassSignal class_signal = ClassSignal::one_hot;
  double signal_scale = 2.0;
  /// Constant added to every feature coordinate (a covariate shift knob).
  double feature_shift = 0.0;

  /// Throws ValidationError unless 0 <= inter_p < intra_p <= 1, feat_dim >= 1,
  /// num_classes >= 1, num_nodes >= 1 and num_graphs >= 1 for graph-level tasks.
  void validate() const;
};

/// Pure function of the spec.
///
/// Node-level: one SBM graph, node v in block floor(v * K / n), features are
/// class mean + N(0, noise_std^2), masks 60/20/20. Regression targets are the
/// block index as a real.
/// Graph-level: graph i has label i mod K; its nodes all draw features around
/// that class mean; split 60/20/20 over graphs.
GraphDataset generate_synthetic(const SynthTaskSpec& spec);

/// Per-class mean feature vector used by the generator (shift included).
Tensor class_mean(const SynthTaskSpec& spec, std::size_t cls);

}  // namespace gnnr
