#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gnnr/aggregator.hpp"
#include "gnnr/autodiff.hpp"
#include "gnnr/graph.hpp"

namespace gnnr {

enum class Activation { relu, none };
enum class Readout { none, mean_pool };

std::string_view to_string(Activation a) noexcept;
std::string_view to_string(Readout r) noexcept;
Activation parse_activation(std::string_view name);
Readout parse_readout(std::string_view name);

/// h' = act(AGG(h W) + b) when `propagate`, else act(h W + b).
/// `attention` is the (1 x 2*out) attention-lite vector, empty if absent.
struct Layer {
  Tensor weight;
  Tensor bias;
  Activation activation = Activation::relu;
  bool propagate = true;
  Tensor attention;

  bool operator==(const Layer&) const = default;
};

struct ModelParams {
  std::vector<Layer> layers;
  Aggregator aggregator = Aggregator::mean;
  Readout readout = Readout::none;
  bool self_loops = true;

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  /// Layer widths chain and biases/attention match their layer.
  void validate() const;

  bool operator==(const ModelParams&) const = default;
};

struct Architecture {
  std::size_t in_dim = 0;
  std::size_t hidden_dim = 16;
  std::size_t out_dim = 0;
  std::size_t propagation_layers = 2;
  Aggregator aggregator = Aggregator::mean;
  Readout readout = Readout::none;
  bool self_loops = true;
  /// Give every propagation layer attention-lite parameters so that
  /// Aggregator::attention can be used (by default or as an override).
  bool attention_params = true;
};

/// `propagation_layers` message-passing layers of width hidden_dim with relu,
/// then a linear head. Glorot-uniform weights, zero biases, attention vectors
/// uniform in +-0.1; all drawn from the "init" substream of `seed`.
ModelParams init_params(const Architecture& arch, std::uint64_t seed);

/// A model plus the content hash of its canonical serialization. Once frozen
/// the parameters are only reachable through const accessors, and
/// current_hash() lets callers prove they were not changed.
class FrozenModel {
 public:
  FrozenModel() = default;

  static FrozenModel freeze(ModelParams params);
  static FrozenModel unfrozen(ModelParams params);

  const ModelParams& params() const noexcept { return params_; }
  const std::vector<Layer>& layers() const noexcept { return params_.layers; }
  Aggregator aggregator() const noexcept { return params_.aggregator; }
  Readout readout() const noexcept { return params_.readout; }
  std::size_t in_dim() const { return params_.in_dim(); }
  std::size_t out_dim() const { return params_.out_dim(); }
  bool frozen() const noexcept { return frozen_; }
  /// Hash recorded at freeze time; empty while unfrozen.
  const std::string& param_hash() const noexcept { return hash_; }
  /// Hash recomputed from the parameters as they are now.
  std::string current_hash() const;
  bool supports(Aggregator a) const noexcept;

 private:
  ModelParams params_;
  std::string hash_;
  bool frozen_ = false;
};

/// Throws ContractError unless the model is frozen.
void require_frozen(const FrozenModel& model, std::string_view op);

/// Asserts the frozen contract around a reprogramming call: the model is
/// frozen and its recomputed hash equals the recorded one on construction and
/// again on verify().
class HashGuard {
 public:
  HashGuard(const FrozenModel& model, std::string_view op);
  void verify() const;

 private:
  const FrozenModel* model_;
  std::string op_;
};

/// Model parameters placed on a tape.
struct BoundModel {
  const ModelParams* params = nullptr;
  std::vector<Var> weights;
  std::vector<Var> biases;
  std::vector<Var> attention;  // invalid Var when a layer has none
};

/// trainable = false places parameters as constants.
BoundModel bind(Tape& tape, const ModelParams& params, bool trainable);

/// Aggregation used at every propagation layer: one aggregator, or a
/// weights-weighted mixture of several.
struct AggregationPlan {
  std::vector<Aggregator> candidates;
  std::optional<Var> weights;  // (1 x K), required when K > 1

  static AggregationPlan single(Aggregator a) { return {{a}, std::nullopt}; }
};

/// Throws ValidationError if features.cols != in_dim ("expects in_dim=...")
/// or a candidate needs parameters the model lacks.
Var forward(const BoundModel& model, const Var& features, const MessageList& messages,
            const Var& edge_weights, const AggregationPlan& plan);

/// Plain inference: (num_nodes x out_dim), or (1 x out_dim) after mean-pool.
Tensor forward(const FrozenModel& model, const Graph& g,
               std::optional<Aggregator> override_aggregator = std::nullopt);

/// Throws ValidationError naming expected and actual input widths.
void require_input_dim(const ModelParams& params, std::size_t feat_dim);

}  // namespace gnnr
