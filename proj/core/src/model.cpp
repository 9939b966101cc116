#include "gnnr/model.hpp"

#include <cmath>

#include "gnnr/errors.hpp"
#include "gnnr/model_io.hpp"
#include "gnnr/rng.hpp"

namespace gnnr {

std::string_view to_string(Activation a) noexcept { return a == Activation::relu ? "relu" : "none"; }

std::string_view to_string(Readout r) noexcept { return r == Readout::none ? "none" : "mean-pool"; }

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "none") return Activation::none;
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

Readout parse_readout(std::string_view name) {
  if (name == "none") return Readout::none;
  if (name == "mean-pool") return Readout::mean_pool;
  throw ValidationError("unknown readout '" + std::string(name) + "'");
}

std::size_t ModelParams::in_dim() const {
  if (layers.empty()) throw ValidationError("model: no layers");
  return layers.front().weight.rows();
}

std::size_t ModelParams::out_dim() const {
  if (layers.empty()) throw ValidationError("model: no layers");
  return layers.back().weight.cols();
}

void ModelParams::validate() const {
  if (layers.empty()) throw ValidationError("model: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    const std::string where = "layers[" + std::to_string(i) + "]";
    if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols()) {
      throw ValidationError(where + ".bias: shape " + to_string(l.bias.shape()) +
                            " does not match weight " + to_string(l.weight.shape()));
    }
    if (!l.attention.empty() &&
        (l.attention.rows() != 1 || l.attention.cols() != 2 * l.weight.cols())) {
      throw ValidationError(where + ".attention: expected 1x" + std::to_string(2 * l.weight.cols()));
    }
    if (i + 1 < layers.size() && l.weight.cols() != layers[i + 1].weight.rows()) {
      throw ValidationError(where + ".weight: output width " + std::to_string(l.weight.cols()) +
                            " does not chain into next layer input " +
                            std::to_string(layers[i + 1].weight.rows()));
    }
    if (!l.weight.all_finite() || !l.bias.all_finite() || !l.attention.all_finite()) {
      throw ValidationError(where + ": non-finite parameter");
    }
  }
}

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
  if (arch.in_dim == 0 || arch.out_dim == 0 || arch.hidden_dim == 0) {
    throw ValidationError("architecture: in_dim, hidden_dim and out_dim must be positive");
  }
  auto rng = substream(seed, "init");
  ModelParams p;
  p.aggregator = arch.aggregator;
  p.readout = arch.readout;
  p.self_loops = arch.self_loops;
  std::size_t width = arch.in_dim;
  auto make_layer = [&](std::size_t in, std::size_t out, Activation act, bool propagate) {
    Layer l;
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    l.weight = Tensor(in, out);
    for (auto& v : l.weight.data()) v = rng.uniform(-bound, bound);
    l.bias = Tensor(1, out);
    l.activation = act;
    l.propagate = propagate;
    if (propagate && arch.attention_params) {
      l.attention = Tensor(1, 2 * out);
      for (auto& v : l.attention.data()) v = rng.uniform(-0.1, 0.1);
    }
    return l;
  };
  for (std::size_t i = 0; i < arch.propagation_layers; ++i) {
    p.layers.push_back(make_layer(width, arch.hidden_dim, Activation::relu, true));
    width = arch.hidden_dim;
  }
  p.layers.push_back(make_layer(width, arch.out_dim, Activation::none, false));
  return p;
}

FrozenModel FrozenModel::freeze(ModelParams params) {
  params.validate();
  FrozenModel m;
  m.params_ = std::move(params);
  m.hash_ = compute_param_hash(m.params_);
  m.frozen_ = true;
  return m;
}

FrozenModel FrozenModel::unfrozen(ModelParams params) {
  params.validate();
  FrozenModel m;
  m.params_ = std::move(params);
  return m;
}

std::string FrozenModel::current_hash() const { return compute_param_hash(params_); }

bool FrozenModel::supports(Aggregator a) const noexcept {
  if (a != Aggregator::attention) return true;
  for (const auto& l : params_.layers)
    if (l.propagate && l.attention.empty()) return false;
  return true;
}

void require_frozen(const FrozenModel& model, std::string_view op) {
  if (!model.frozen()) {
    throw ContractError(std::string(op) + ": model must be frozen before reprogramming");
  }
}

HashGuard::HashGuard(const FrozenModel& model, std::string_view op) : model_(&model), op_(op) {
  require_frozen(model, op);
  verify();
}

void HashGuard::verify() const {
  if (model_->current_hash() != model_->param_hash()) {
    throw ContractError(op_ + ": frozen model parameters changed (param_hash mismatch)");
  }
}

BoundModel bind(Tape& tape, const ModelParams& params, bool trainable) {
  BoundModel b;
  b.params = &params;
  auto place = [&](const Tensor& t) { return trainable ? tape.parameter(t) : tape.constant(t); };
  for (const auto& l : params.layers) {
    b.weights.push_back(place(l.weight));
    b.biases.push_back(place(l.bias));
    b.attention.push_back(l.attention.empty() ? Var() : place(l.attention));
  }
  return b;
}

void require_input_dim(const ModelParams& params, std::size_t feat_dim) {
  if (feat_dim != params.in_dim()) {
    throw ValidationError("model expects in_dim=" + std::to_string(params.in_dim()) +
                          " input features, got " + std::to_string(feat_dim));
  }
}

Var forward(const BoundModel& model, const Var& features, const MessageList& messages,
            const Var& edge_weights, const AggregationPlan& plan) {
  const ModelParams& p = *model.params;
  require_input_dim(p, features.shape().cols);
  if (plan.candidates.empty()) throw ValidationError("forward: aggregation plan has no candidates");
  if (plan.candidates.size() > 1 && !plan.weights) {
    throw ValidationError("forward: mixture of aggregators needs weights");
  }

  auto aggregate = [&](const Var& z, std::size_t layer, Aggregator a) {
    if (a == Aggregator::attention) {
      if (!model.attention[layer].valid()) {
        throw ValidationError("aggregator candidate 'attention-lite' unsupported: model has no "
                              "attention parameters");
      }
      return attention_aggregate(z, messages, edge_weights, model.attention[layer]);
    }
    return weighted_neighbor_aggregate(z, messages, edge_weights, a);
  };

  Var h = features;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    Var z = matmul(h, model.weights[i]);
    if (p.layers[i].propagate) {
      if (plan.weights) {
        std::vector<Var> parts;
        parts.reserve(plan.candidates.size());
        for (const auto a : plan.candidates) parts.push_back(aggregate(z, i, a));
        z = mix(parts, *plan.weights);
      } else {
        z = aggregate(z, i, plan.candidates.front());
      }
    }
    z = add_row(z, model.biases[i]);
    h = p.layers[i].activation == Activation::relu ? relu(z) : z;
  }
  if (p.readout == Readout::mean_pool) h = mean_rows(h);
  return h;
}

Tensor forward(const FrozenModel& model, const Graph& g, std::optional<Aggregator> override_aggregator) {
  require_input_dim(model.params(), g.feat_dim());
  Tape tape;
  const BoundModel bound = bind(tape, model.params(), false);
  const MessageList messages = build_messages(g, model.params().self_loops);
  const Var x = tape.constant(g.features);
  const Var w = tape.constant(Tensor::row_vector(g.edge_weights));
  const auto plan = AggregationPlan::single(override_aggregator.value_or(model.aggregator()));
  return forward(bound, x, messages, w, plan).value();
}

}  // namespace gnnr
