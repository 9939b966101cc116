#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gnnr/aggregator.hpp"
#include "gnnr/autodiff.hpp"
#include "gnnr/graph.hpp"
#include "gnnr/loss.hpp"
#include "gnnr/model.hpp"
#include "gnnr/padding.hpp"
#include "gnnr/rng.hpp"

namespace gnnr {

/// soft: noisy softmax mixture of all candidates (training).
/// hard: one candidate, the noise-free argmax of the logits (inference).
enum class ChoiceMode { soft, hard };

/// What the task-embedding layer reads: the mean raw node feature, or the
/// mean first-layer activation of the frozen model.
enum class EmbeddingSource { raw_mean, first_layer };

std::string_view to_string(ChoiceMode m) noexcept;
std::string_view to_string(EmbeddingSource s) noexcept;
ChoiceMode parse_choice_mode(std::string_view name);
EmbeddingSource parse_embedding_source(std::string_view name);

/// A per-task aggregator selector living outside the frozen model:
/// logits = embedding(G) * embed_weight + embed_bias.
struct AggregatorChoice {
  std::vector<Aggregator> candidates{kAllAggregators.begin(), kAllAggregators.end()};
  Tensor embed_weight;  // embed_dim x K
  Tensor embed_bias;    // 1 x K
  double tau = 1.0;
  std::uint64_t seed = 0;
  ChoiceMode mode = ChoiceMode::soft;
  EmbeddingSource source = EmbeddingSource::raw_mean;
  /// Index into candidates fixed by training; hard mode falls back to the
  /// argmax of the graph's logits when unset.
  std::optional<std::size_t> selected;

  std::size_t num_candidates() const noexcept { return candidates.size(); }
  std::size_t embed_dim() const noexcept { return embed_weight.rows(); }
  void validate() const;
  bool operator==(const AggregatorChoice&) const = default;
};

/// Embedding weights ~ N(0, init_std^2) from the "reagg" substream of `seed`;
/// zero bias.
AggregatorChoice make_choice(std::vector<Aggregator> candidates, std::size_t embed_dim, std::uint64_t seed,
                             double init_std = 0.1);

/// Width the embedding layer expects for `source` on `model` with raw
/// downstream features of width raw_dim.
std::size_t embedding_dim(EmbeddingSource source, const FrozenModel& model, std::size_t raw_dim);

/// (1 x embed_dim) input of the embedding layer. first_layer needs
/// `g` at the model's input width. Throws ValidationError on an empty graph.
Tensor embedding_input(const AggregatorChoice& choice, const FrozenModel& model, const Graph& g);

/// (1 x K) logits for one graph.
Tensor task_embedding(const AggregatorChoice& choice, const FrozenModel& model, const Graph& g);

struct GumbelSample {
  std::vector<double> noise;
  std::vector<double> weights;
  std::size_t selected = 0;
};

/// Standard Gumbel noise -ln(-ln u), u ~ U(0,1), K draws from `rng`.
std::vector<double> gumbel_noise(std::size_t k, SplitMix64& rng);

/// weights = softmax((logits + noise) / tau); hard mode returns the one-hot
/// of the argmax (lowest index on ties).
GumbelSample gumbel_softmax(std::span<const double> logits, std::span<const double> noise, double tau,
                            ChoiceMode mode);
/// Noise drawn from the "gumbel" substream of `seed`.
GumbelSample gumbel_softmax(std::span<const double> logits, double tau, std::uint64_t seed, ChoiceMode mode);

/// Differentiable weights: soft mode is the softmax, hard mode the one-hot
/// whose gradient flows through the softmax (straight-through).
Var gumbel_weights(const Var& logits, std::span<const double> noise, double tau, ChoiceMode mode);

/// Soft mode: noisy mixture with noise from `sample_seed`. Hard mode:
/// deterministic single aggregator. The model is never modified.
std::pair<Tensor, GumbelSample> select_and_forward(const FrozenModel& model, const Graph& g,
                                                   const AggregatorChoice& choice,
                                                   std::uint64_t sample_seed = 0);

struct ReaggOptions {
  double lr = 0.1;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  /// Linear anneal of tau from choice.tau to this value over the epochs.
  std::optional<double> tau_final;
  /// Straight-through one-hot weights during training instead of soft ones.
  bool straight_through = false;
};

struct ReaggResult {
  AggregatorChoice choice;  // hard mode, selected set
  std::optional<PaddingSpec> padding;
  std::vector<double> losses;
  std::vector<GumbelSample> samples;  // one per epoch
  /// histogram[e][k]: times candidate k was the sampled argmax in epochs 0..e.
  std::vector<std::vector<std::size_t>> histogram;
};

/// Learns the embedding layer (and, when `padding` is given, its delta) by
/// gradient descent on the training loss of the Gumbel-softmax mixture. The
/// logits are task-level: the embedding input is averaged over the training
/// graphs (the whole graph for transductive tasks).
ReaggResult train_reagg(const FrozenModel& model, const GraphDataset& ds, const AggregatorChoice& choice,
                        const LossSpec& loss, const ReaggOptions& opt,
                        const std::optional<PaddingSpec>& padding = std::nullopt);

/// Aggregator used at inference.
Aggregator selected_aggregator(const AggregatorChoice& choice);

std::string choice_to_json(const AggregatorChoice& choice);
AggregatorChoice choice_from_json(std::string_view text);

}  // namespace gnnr
