#include "gnnr/training.hpp"

#include <cmath>
#include <string>

#include "gnnr/errors.hpp"

namespace gnnr {

namespace {

Targets graph_targets(const GraphDataset& ds, Split split) {
  if (!ds.graph_labels) throw ValidationError("graph_labels: required for evaluation");
  Targets t;
  const auto& ids = ds.split[split];
  for (std::size_t k = 0; k < ids.size(); ++k) {
    t.rows.push_back(k);
    t.values.push_back((*ds.graph_labels)[ids[k]]);
  }
  return t;
}

void require_nonempty(const Targets& t, Split split) {
  if (t.rows.empty()) {
    throw ValidationError("evaluate: split '" + std::string(to_string(split)) + "' is empty");
  }
}

}  // namespace

Var dataset_loss(Tape& tape, const GraphDataset& ds, Split split, const LossSpec& loss,
                 const TapeForward& forward) {
  if (!ds.graph_level()) {
    const Targets t = node_targets(ds.graphs.front(), split);
    require_nonempty(t, split);
    return loss_on_rows(forward(tape, 0), t, loss);
  }
  const Targets t = graph_targets(ds, split);
  require_nonempty(t, split);
  std::vector<Var> rows;
  rows.reserve(t.rows.size());
  for (const auto i : ds.split[split]) rows.push_back(forward(tape, i));
  return loss_on_rows(concat_rows(rows), t, loss);
}

Metrics evaluate_with(const GraphDataset& ds, Split split, const LossSpec& loss, const Predictor& predict) {
  if (!ds.graph_level()) {
    const Targets t = node_targets(ds.graphs.front(), split);
    require_nonempty(t, split);
    return compute_metrics(predict(0), t, loss, ds.task_kind);
  }
  const Targets t = graph_targets(ds, split);
  require_nonempty(t, split);
  const auto& ids = ds.split[split];
  Tensor outputs;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const Tensor out = predict(ids[k]);
    if (out.rows() != 1) throw ShapeError("evaluate: graph-level model must emit one row per graph");
    if (k == 0) outputs = Tensor(ids.size(), out.cols());
    for (std::size_t c = 0; c < out.cols(); ++c) outputs(k, c) = out(0, c);
  }
  return compute_metrics(outputs, t, loss, ds.task_kind);
}

void require_finite_loss(double value, std::string_view where, std::size_t epoch) {
  if (!std::isfinite(value)) {
    throw NumericError(std::string(where) + ": non-finite loss " + std::to_string(value) + " at epoch " +
                       std::to_string(epoch) + "; try a smaller learning rate");
  }
}

void gradient_step(const Tape& tape, const Var& var, Tensor& value, double lr, std::string_view where) {
  const Tensor g = tape.grad(var);
  if (!g.all_finite()) throw NumericError(std::string(where) + ": non-finite gradient");
  auto& v = value.data();
  const auto& gd = g.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * gd[i];
}

std::string_view to_string(StepRule r) noexcept {
  switch (r) {
    case StepRule::plain: return "plain";
    case StepRule::adam: return "adam";
    case StepRule::newton: return "newton";
  }
  return "plain";
}

StepRule parse_step_rule(std::string_view name) {
  if (name == "plain") return StepRule::plain;
  if (name == "adam") return StepRule::adam;
  if (name == "newton") return StepRule::newton;
  throw ValidationError("unknown step rule '" + std::string(name) + "'");
}

void Stepper::step(std::size_t slot, const Tape& tape, const Var& var, Tensor& value, std::string_view where) {
  if (rule_ == StepRule::plain) {
    gradient_step(tape, var, value, lr_, where);
    return;
  }
  if (rule_ == StepRule::newton) throw ValidationError(std::string(where) + ": newton needs a line-search loop");
  const Tensor g = tape.grad(var);
  if (!g.all_finite()) throw NumericError(std::string(where) + ": non-finite gradient");
  if (slot >= state_.size()) state_.resize(slot + 1);
  Moments& s = state_[slot];
  if (s.m.empty()) {
    s.m.assign(g.size(), 0.0);
    s.v.assign(g.size(), 0.0);
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++s.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(s.t));
  auto& v = value.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    s.m[i] = beta1 * s.m[i] + (1 - beta1) * g[i];
    s.v[i] = beta2 * s.v[i] + (1 - beta2) * g[i] * g[i];
    v[i] -= lr_ * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + eps);
  }
}

PretrainResult pretrain(const GraphDataset& ds, const Architecture& arch, const TrainOptions& opt,
                        const LossSpec& loss) {
  ds.validate();
  if (arch.in_dim != ds.feat_dim()) {
    throw ValidationError("architecture in_dim=" + std::to_string(arch.in_dim) +
                          " does not match dataset feat_dim=" + std::to_string(ds.feat_dim()));
  }
  ModelParams params = init_params(arch, opt.seed);
  std::vector<MessageList> messages;
  std::vector<Tensor> weights;
  for (const auto& g : ds.graphs) {
    messages.push_back(build_messages(g, params.self_loops));
    weights.push_back(Tensor::row_vector(g.edge_weights));
  }
  const auto plan = AggregationPlan::single(params.aggregator);

  PretrainResult result;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    Tape tape;
    const BoundModel bound = bind(tape, params, true);
    const Var l = dataset_loss(tape, ds, Split::train, loss, [&](Tape& t, std::size_t i) {
      return forward(bound, t.constant(ds.graphs[i].features), messages[i], t.constant(weights[i]), plan);
    });
    const double value = l.value().item();
    require_finite_loss(value, "pretrain", epoch);
    result.losses.push_back(value);
    tape.backward(l);
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
      Layer& layer = params.layers[i];
      gradient_step(tape, bound.weights[i], layer.weight, opt.lr, "pretrain");
      gradient_step(tape, bound.biases[i], layer.bias, opt.lr, "pretrain");
      if (bound.attention[i].valid()) gradient_step(tape, bound.attention[i], layer.attention, opt.lr, "pretrain");
    }
  }
  result.model = FrozenModel::freeze(std::move(params));
  return result;
}

PretrainResult pretrain(const GraphDataset& ds, const Architecture& arch, const TrainOptions& opt) {
  return pretrain(ds, arch, opt, default_loss(ds.task_kind, ds.num_classes));
}

Metrics evaluate(const FrozenModel& model, const GraphDataset& ds, const LossSpec& loss, Split split,
                 std::optional<Aggregator> override_aggregator) {
  return evaluate_with(ds, split, loss,
                       [&](std::size_t i) { return forward(model, ds.graphs[i], override_aggregator); });
}

std::vector<SweepEntry> aggregator_sweep(const FrozenModel& model, const GraphDataset& ds,
                                         const LossSpec& loss, std::span<const Aggregator> candidates,
                                         Split split) {
  if (candidates.empty()) throw ValidationError("aggregator_sweep: candidates must be non-empty");
  std::vector<SweepEntry> out;
  for (const auto a : candidates) {
    if (!model.supports(a)) {
      throw ValidationError("aggregator_sweep: model has no parameters for '" + std::string(to_string(a)) + "'");
    }
    out.push_back({a, evaluate(model, ds, loss, split, a)});
  }
  return out;
}

}  // namespace gnnr
