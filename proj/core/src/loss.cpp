#include "gnnr/loss.hpp"

#include <cmath>
#include <string>

#include "gnnr/errors.hpp"

namespace gnnr {

std::string_view to_string(LossKind kind) noexcept {
  switch (kind) {
    case LossKind::cross_entropy: return "cross-entropy";
    case LossKind::mse: return "mse";
    case LossKind::mae: return "mae";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "cross-entropy") return LossKind::cross_entropy;
  if (name == "mse") return LossKind::mse;
  if (name == "mae") return LossKind::mae;
  throw ValidationError("unknown loss '" + std::string(name) + "'");
}

OutputSlice LossSpec::slice_for(std::size_t out_dim) const {
  OutputSlice s;
  if (output_slice) {
    s = *output_slice;
  } else {
    s.length = kind == LossKind::cross_entropy ? out_dim : 1;
  }
  if (s.length == 0 || s.start + s.length > out_dim) {
    throw ValidationError("output_slice (" + std::to_string(s.start) + ", " + std::to_string(s.length) +
                          ") does not fit out_dim=" + std::to_string(out_dim));
  }
  return s;
}

LossSpec default_loss(TaskKind kind, std::optional<std::size_t> num_classes) {
  LossSpec spec;
  if (is_classification(kind)) {
    spec.kind = LossKind::cross_entropy;
    if (num_classes) spec.output_slice = OutputSlice{0, *num_classes};
  } else {
    spec.kind = LossKind::mse;
    spec.output_slice = OutputSlice{0, 1};
  }
  return spec;
}

Targets node_targets(const Graph& g, Split split) {
  if (!g.node_labels) throw ValidationError("node_labels: required for evaluation");
  Targets t;
  t.rows = mask_indices(g, split);
  std::visit(
      [&](const auto& labels) {
        for (const auto r : t.rows) t.values.push_back(static_cast<double>(labels[r]));
      },
      *g.node_labels);
  return t;
}

Var loss_on_rows(const Var& outputs, const Targets& targets, const LossSpec& spec) {
  if (targets.rows.empty()) throw ValidationError("loss: no supervised rows");
  if (targets.rows.size() != targets.values.size()) {
    throw ValidationError("loss: rows and values differ in length");
  }
  const OutputSlice slice = spec.slice_for(outputs.shape().cols);
  const Var sliced = slice_cols(outputs, slice.start, slice.length);
  Tape& tape = outputs.tape();
  if (spec.kind == LossKind::cross_entropy) {
    std::vector<std::size_t> cols;
    cols.reserve(targets.values.size());
    for (const double v : targets.values) {
      if (v < 0 || v != std::floor(v) || v >= static_cast<double>(slice.length)) {
        throw ValidationError("loss: class label " + std::to_string(v) + " outside the " +
                              std::to_string(slice.length) + " sliced output neurons");
      }
      cols.push_back(static_cast<std::size_t>(v));
    }
    return scale(sum(select_entries(log_softmax_rows(sliced), targets.rows, cols)),
                 -1.0 / static_cast<double>(cols.size()));
  }
  const std::vector<std::size_t> first(targets.rows.size(), 0);
  const Var pred = select_entries(sliced, targets.rows, first);
  const Var diff = sub(pred, tape.constant(Tensor(targets.values.size(), 1, targets.values)));
  return mean(spec.kind == LossKind::mse ? square(diff) : abs(diff));
}

}  // namespace gnnr
