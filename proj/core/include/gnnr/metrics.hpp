#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "gnnr/graph.hpp"
#include "gnnr/loss.hpp"
#include "gnnr/tensor.hpp"

namespace gnnr {

struct Metrics {
  std::optional<double> accuracy;
  std::optional<double> mae;
  std::optional<double> rmse;
  /// Binary classification only (slice of two neurons, both classes present).
  std::optional<double> roc_auc;
  double loss = 0.0;
  std::size_t count = 0;
};

/// Metrics of `outputs` on the target rows. Classification predicts the
/// argmax of the sliced neurons (lowest index on ties); regression reads the
/// first sliced neuron.
Metrics compute_metrics(const Tensor& outputs, const Targets& targets, const LossSpec& loss,
                        TaskKind kind);

/// Mann-Whitney AUC with average ranks for tied scores. Returns nullopt when
/// one class is absent.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> positive);

}  // namespace gnnr
