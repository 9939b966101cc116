#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "gnnr/aggregator.hpp"
#include "gnnr/graph.hpp"
#include "gnnr/loss.hpp"
#include "gnnr/metrics.hpp"
#include "gnnr/model.hpp"

namespace gnnr {

struct TrainOptions {
  double lr = 0.1;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
};

/// Builds the output rows for dataset graph `index` on a tape.
using TapeForward = std::function<Var(Tape& tape, std::size_t index)>;
/// Inference for dataset graph `index`.
using Predictor = std::function<Tensor(std::size_t index)>;

/// Training-style loss over a split: the masked nodes of the single graph for
/// node-level tasks, or the split's graphs stacked row by row for graph-level.
Var dataset_loss(Tape& tape, const GraphDataset& ds, Split split, const LossSpec& loss,
                 const TapeForward& forward);

/// Metrics over a split, with the same row selection as dataset_loss.
Metrics evaluate_with(const GraphDataset& ds, Split split, const LossSpec& loss, const Predictor& predict);

/// Throws NumericError naming `where` and the epoch if `value` is NaN/Inf.
void require_finite_loss(double value, std::string_view where, std::size_t epoch);

/// value -= lr * grad(var). Throws NumericError on a non-finite gradient.
void gradient_step(const Tape& tape, const Var& var, Tensor& value, double lr, std::string_view where);

/// plain: value -= lr * g. adam: Adam moment estimates (beta1 0.9,
/// beta2 0.999, eps 1e-8) with bias correction.
/// newton is a damped Newton rule with line search; only reprogramming loops
/// (descend) support it, not Stepper.
enum class StepRule { plain, adam, newton };

std::string_view to_string(StepRule r) noexcept;
StepRule parse_step_rule(std::string_view name);

/// Applies one update per call to each registered tensor, keeping optimizer
/// state between calls. Parameters are addressed by registration order.
class Stepper {
 public:
  Stepper(StepRule rule, double lr) : rule_(rule), lr_(lr) {}

  /// Update parameter `slot` (0, 1, ... in first-use order) from var's grad.
  void step(std::size_t slot, const Tape& tape, const Var& var, Tensor& value, std::string_view where);

 private:
  struct Moments {
    std::vector<double> m, v;
    std::size_t t = 0;
  };
  StepRule rule_;
  double lr_;
  std::vector<Moments> state_;
};

struct PretrainResult {
  FrozenModel model;
  /// Training loss before each step.
  std::vector<double> losses;
};

/// Full-batch gradient descent from init_params(arch, opt.seed), then frozen.
PretrainResult pretrain(const GraphDataset& ds, const Architecture& arch, const TrainOptions& opt,
                        const LossSpec& loss);
PretrainResult pretrain(const GraphDataset& ds, const Architecture& arch, const TrainOptions& opt);

Metrics evaluate(const FrozenModel& model, const GraphDataset& ds, const LossSpec& loss, Split split,
                 std::optional<Aggregator> override_aggregator = std::nullopt);

struct SweepEntry {
  Aggregator aggregator;
  Metrics metrics;
};

/// evaluate() once per candidate override; throws on an empty candidate list.
std::vector<SweepEntry> aggregator_sweep(const FrozenModel& model, const GraphDataset& ds,
                                         const LossSpec& loss, std::span<const Aggregator> candidates,
                                         Split split = Split::test);

}  // namespace gnnr
