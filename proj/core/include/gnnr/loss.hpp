#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "gnnr/autodiff.hpp"
#include "gnnr/graph.hpp"

namespace gnnr {

enum class LossKind { cross_entropy, mse, mae };

std::string_view to_string(LossKind kind) noexcept;
LossKind parse_loss_kind(std::string_view name);

/// Output neurons [start, start + length) that the downstream task reads.
struct OutputSlice {
  std::size_t start = 0;
  std::size_t length = 0;
  bool operator==(const OutputSlice&) const = default;
};

struct LossSpec {
  LossKind kind = LossKind::cross_entropy;
  std::optional<OutputSlice> output_slice;

  /// The slice in effect for a model with `out_dim` outputs: the explicit
  /// slice, else all outputs (cross-entropy) or the first neuron (regression).
  /// Throws ValidationError if it does not fit.
  OutputSlice slice_for(std::size_t out_dim) const;
};

/// Cross-entropy over the downstream classes by default, MSE for regression.
LossSpec default_loss(TaskKind kind, std::optional<std::size_t> num_classes);

/// Which output rows are supervised and their labels (class ids as reals for
/// classification).
struct Targets {
  std::vector<std::size_t> rows;
  std::vector<double> values;
};

/// Node targets under the graph's mask for `split`.
Targets node_targets(const Graph& g, Split split);

/// Mean loss over the target rows of `outputs`, reading only the sliced
/// neurons. Regression reads the first neuron of the slice.
Var loss_on_rows(const Var& outputs, const Targets& targets, const LossSpec& spec);

}  // namespace gnnr
