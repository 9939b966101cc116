#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gnnr/graph.hpp"
#include "gnnr/loss.hpp"
#include "gnnr/model.hpp"
#include "gnnr/tensor.hpp"
#include "gnnr/training.hpp"

namespace gnnr {

enum class PadPosition { front, center, end, random };

std::string_view to_string(PadPosition p) noexcept;
PadPosition parse_pad_position(std::string_view name);

/// A learned vector `delta`, shared by every node, spliced into raw features
/// of width raw_dim so that they reach raw_dim + pad_size columns.
struct PaddingSpec {
  std::size_t raw_dim = 0;
  std::size_t pad_size = 0;
  PadPosition position = PadPosition::end;
  /// Seeds delta's initialization and the random-position permutation.
  std::uint64_t seed = 0;
  double init_std = 0.01;
  Tensor delta;  // 1 x pad_size

  /// Destination column of each column of [x || delta]. front/end put the
  /// padding before/after x; center splits x at floor(raw_dim / 2); random is
  /// one permutation of all raw_dim + pad_size columns, fixed by `seed`.
  std::vector<std::size_t> layout() const;
  /// Columns of the padded matrix that hold padding, ascending.
  std::vector<std::size_t> padding_columns() const;
  void validate() const;

  bool operator==(const PaddingSpec&) const = default;
};

/// pretrained_dim - downstream_dim; throws ValidationError when negative.
std::size_t required_pad_size(std::size_t pretrained_dim, std::size_t downstream_dim);

/// delta ~ N(0, init_std^2) from the "padding" substream of `seed`.
PaddingSpec make_padding(std::size_t raw_dim, std::size_t target_dim, PadPosition position,
                         std::uint64_t seed, double init_std = 0.01);

/// Zero delta: the untrained zero-fill baseline.
PaddingSpec zero_padding(std::size_t raw_dim, std::size_t target_dim, PadPosition position,
                         std::uint64_t seed = 0);

/// Raw coordinates are copied bit-exactly; throws ShapeError when x.cols
/// differs from spec.raw_dim.
Tensor apply_padding(const Tensor& x, const PaddingSpec& spec);
Graph apply_padding(const Graph& g, const PaddingSpec& spec);

/// Gradient descent on a learnable input-side artifact.
struct ReprogramOptions {
  /// Step size; for the newton rule a multiplier on the Newton step.
  double lr = 1.0;
  StepRule rule = StepRule::newton;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  /// Stop once (previous - current) / |previous| < early_stop. 0 disables.
  double early_stop = 1e-4;
};

struct PaddingResult {
  PaddingSpec spec;
  /// Training loss at each evaluated delta: index 0 is the initial delta,
  /// the last entry is the returned delta.
  std::vector<double> losses;
};

/// Minimizes the mean downstream training loss over delta alone. The model
/// must be frozen; its hash is checked before and after.
PaddingResult optimize_padding(const FrozenModel& model, const GraphDataset& ds, const PaddingSpec& spec,
                               const LossSpec& loss, const ReprogramOptions& opt);

/// forward(model, padded g).
Tensor infer_with_padding(const FrozenModel& model, const Graph& g, const PaddingSpec& spec);

std::string padding_to_json(const PaddingSpec& spec);
PaddingSpec padding_from_json(std::string_view text);

}  // namespace gnnr
