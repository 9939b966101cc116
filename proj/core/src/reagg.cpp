#include "gnnr/reagg.hpp"

#include <algorithm>
#include <cmath>

#include "gnnr/errors.hpp"
#include "gnnr/program.hpp"
#include "gnnr/training.hpp"
#include "json_util.hpp"

namespace gnnr {

using detail::json;

std::string_view to_string(ChoiceMode m) noexcept { return m == ChoiceMode::soft ? "soft" : "hard"; }

std::string_view to_string(EmbeddingSource s) noexcept {
  return s == EmbeddingSource::raw_mean ? "raw-mean" : "first-layer";
}

ChoiceMode parse_choice_mode(std::string_view name) {
  if (name == "soft") return ChoiceMode::soft;
  if (name == "hard") return ChoiceMode::hard;
  throw ValidationError("unknown choice mode '" + std::string(name) + "'");
}

EmbeddingSource parse_embedding_source(std::string_view name) {
  if (name == "raw-mean") return EmbeddingSource::raw_mean;
  if (name == "first-layer") return EmbeddingSource::first_layer;
  throw ValidationError("unknown embedding source '" + std::string(name) + "'");
}

void AggregatorChoice::validate() const {
  if (candidates.empty()) throw ValidationError("candidates: at least one aggregator required");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError("tau: must be positive");
  const std::size_t k = candidates.size();
  if (embed_weight.cols() != k || embed_bias.rows() != 1 || embed_bias.cols() != k) {
    throw ValidationError("embed_weights: expected (d x " + std::to_string(k) + ") weight and (1 x " +
                          std::to_string(k) + ") bias");
  }
  if (!embed_weight.all_finite() || !embed_bias.all_finite()) {
    throw ValidationError("embed_weights: contain NaN or Inf");
  }
  if (selected && *selected >= k) throw ValidationError("selected: index out of range");
}

AggregatorChoice make_choice(std::vector<Aggregator> candidates, std::size_t embed_dim, std::uint64_t seed,
                             double init_std) {
  AggregatorChoice c;
  c.candidates = std::move(candidates);
  c.seed = seed;
  c.embed_weight = Tensor(embed_dim, c.candidates.size());
  c.embed_bias = Tensor(1, c.candidates.size());
  auto rng = substream(seed, "reagg");
  for (auto& v : c.embed_weight.data()) v = init_std * rng.normal();
  c.validate();
  return c;
}

std::size_t embedding_dim(EmbeddingSource source, const FrozenModel& model, std::size_t raw_dim) {
  return source == EmbeddingSource::raw_mean ? raw_dim : model.layers().front().weight.cols();
}

Tensor embedding_input(const AggregatorChoice& choice, const FrozenModel& model, const Graph& g) {
  if (g.num_nodes == 0) throw ValidationError("task_embedding: empty graph");
  Tensor rows = g.features;
  if (choice.source == EmbeddingSource::first_layer) {
    ModelParams first;
    first.layers = {model.layers().front()};
    first.aggregator = model.aggregator();
    first.self_loops = model.params().self_loops;
    rows = forward(FrozenModel::unfrozen(std::move(first)), g);
  }
  Tensor mean(1, rows.cols());
  for (std::size_t r = 0; r < rows.rows(); ++r)
    for (std::size_t c = 0; c < rows.cols(); ++c) mean[c] += rows(r, c);
  for (auto& v : mean.data()) v /= static_cast<double>(rows.rows());
  if (mean.cols() != choice.embed_dim()) {
    throw ShapeError("task_embedding: embedding layer expects width " + std::to_string(choice.embed_dim()) +
                     ", got " + std::to_string(mean.cols()));
  }
  return mean;
}

Tensor task_embedding(const AggregatorChoice& choice, const FrozenModel& model, const Graph& g) {
  choice.validate();
  const Tensor input = embedding_input(choice, model, g);
  Tensor logits = choice.embed_bias;
  for (std::size_t k = 0; k < logits.cols(); ++k)
    for (std::size_t d = 0; d < input.cols(); ++d) logits[k] += input[d] * choice.embed_weight(d, k);
  return logits;
}

std::vector<double> gumbel_noise(std::size_t k, SplitMix64& rng) {
  std::vector<double> noise(k);
  for (auto& g : noise) g = -std::log(-std::log(rng.uniform()));
  return noise;
}

GumbelSample gumbel_softmax(std::span<const double> logits, std::span<const double> noise, double tau,
                            ChoiceMode mode) {
  if (!(tau > 0.0)) throw ValidationError("gumbel_softmax: tau must be positive");
  if (logits.size() != noise.size() || logits.empty()) {
    throw ShapeError("gumbel_softmax: logits and noise must be non-empty and equally long");
  }
  GumbelSample s;
  s.noise.assign(noise.begin(), noise.end());
  std::vector<double> z(logits.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (logits[i] + noise[i]) / tau;
  s.selected = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
  s.weights.assign(z.size(), 0.0);
  if (mode == ChoiceMode::hard) {
    s.weights[s.selected] = 1.0;
    return s;
  }
  const double top = z[s.selected];
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += s.weights[i] = std::exp(z[i] - top);
  for (auto& w : s.weights) w /= total;
  return s;
}

GumbelSample gumbel_softmax(std::span<const double> logits, double tau, std::uint64_t seed, ChoiceMode mode) {
  auto rng = substream(seed, "gumbel");
  const auto noise = gumbel_noise(logits.size(), rng);
  return gumbel_softmax(logits, noise, tau, mode);
}

Var gumbel_weights(const Var& logits, std::span<const double> noise, double tau, ChoiceMode mode) {
  Tape& tape = logits.tape();
  const Var noisy = add(logits, tape.constant(Tensor(1, noise.size(), {noise.begin(), noise.end()})));
  const Var soft = softmax_rows(scale(noisy, 1.0 / tau));
  if (mode == ChoiceMode::soft) return soft;
  const auto& w = soft.value().data();
  Tensor hard(1, w.size());
  hard[static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin())] = 1.0;
  return straight_through(soft, hard);
}

namespace {

void require_supported(const FrozenModel& model, const AggregatorChoice& choice) {
  for (const auto a : choice.candidates) {
    if (!model.supports(a)) {
      throw ValidationError("aggregator candidate '" + std::string(to_string(a)) +
                            "' unsupported: model has no parameters for it");
    }
  }
}

std::size_t argmax(const Tensor& row) {
  const auto& d = row.data();
  return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

}  // namespace

Aggregator selected_aggregator(const AggregatorChoice& choice) {
  if (!choice.selected) throw ValidationError("aggregator choice has no selection yet");
  return choice.candidates[*choice.selected];
}

std::pair<Tensor, GumbelSample> select_and_forward(const FrozenModel& model, const Graph& g,
                                                   const AggregatorChoice& choice, std::uint64_t sample_seed) {
  const HashGuard guard(model, "select_and_forward");
  choice.validate();
  require_supported(model, choice);
  const Tensor logits = task_embedding(choice, model, g);
  std::pair<Tensor, GumbelSample> out;
  if (choice.mode == ChoiceMode::hard) {
    const std::vector<double> zeros(logits.size(), 0.0);
    out.second = gumbel_softmax(logits.data(), zeros, choice.tau, ChoiceMode::hard);
    if (choice.selected) {
      std::fill(out.second.weights.begin(), out.second.weights.end(), 0.0);
      out.second.selected = *choice.selected;
      out.second.weights[*choice.selected] = 1.0;
    }
    out.first = forward(model, g, choice.candidates[out.second.selected]);
  } else {
    out.second = gumbel_softmax(logits.data(), choice.tau, sample_seed, ChoiceMode::soft);
    Tape tape;
    const BoundModel bound = bind(tape, model.params(), false);
    const PreparedGraph prepared = prepare_graph(g, model.params());
    TapeProgram program;
    program.plan = {choice.candidates, tape.constant(Tensor::row_vector(out.second.weights))};
    out.first = program_forward(tape, bound, prepared, program).value();
  }
  guard.verify();
  return out;
}

ReaggResult train_reagg(const FrozenModel& model, const GraphDataset& ds, const AggregatorChoice& choice,
                        const LossSpec& loss, const ReaggOptions& opt, const std::optional<PaddingSpec>& padding) {
  const HashGuard guard(model, "train_reagg");
  choice.validate();
  require_supported(model, choice);
  if (opt.tau_final && !(*opt.tau_final > 0.0)) throw ValidationError("tau_final: must be positive");
  if (padding) {
    padding->validate();
    require_input_dim(model.params(), padding->raw_dim + padding->pad_size);
  } else {
    require_input_dim(model.params(), ds.feat_dim());
  }

  std::vector<PreparedGraph> prepared;
  for (const auto& g : ds.graphs) prepared.push_back(prepare_graph(g, model.params()));
  std::vector<std::size_t> embed_graphs = ds.graph_level() ? ds.split.train : std::vector<std::size_t>{0};
  if (embed_graphs.empty()) throw ValidationError("train_reagg: no training graphs");

  ReaggResult result;
  result.choice = choice;
  result.padding = padding;
  AggregatorChoice& c = result.choice;
  const std::size_t k = c.num_candidates();

  auto task_input = [&]() {
    Tensor acc(1, c.embed_dim());
    for (const auto i : embed_graphs) {
      const Graph g = result.padding && c.source == EmbeddingSource::first_layer
                          ? apply_padding(ds.graphs[i], *result.padding)
                          : ds.graphs[i];
      acc += embedding_input(c, model, g);
    }
    for (auto& v : acc.data()) v /= static_cast<double>(embed_graphs.size());
    return acc;
  };

  auto rng = substream(opt.seed, "gumbel");
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    double tau = c.tau;
    if (opt.tau_final && opt.epochs > 1) {
      tau = c.tau + (*opt.tau_final - c.tau) * static_cast<double>(epoch) / static_cast<double>(opt.epochs - 1);
    }
    const auto noise = gumbel_noise(k, rng);

    Tape tape;
    const BoundModel bound = bind(tape, model.params(), false);
    const Var w = tape.parameter(c.embed_weight);
    const Var b = tape.parameter(c.embed_bias);
    const Var logits = add_row(matmul(tape.constant(task_input()), w), b);
    const Var weights =
        gumbel_weights(logits, noise, tau, opt.straight_through ? ChoiceMode::hard : ChoiceMode::soft);
    TapeProgram program;
    program.plan = {c.candidates, weights};
    if (result.padding) {
      program.padding = &*result.padding;
      program.delta = tape.parameter(result.padding->delta);
    }
    const Var l = dataset_loss(tape, ds, Split::train, loss, [&](Tape& t, std::size_t i) {
      return program_forward(t, bound, prepared[i], program);
    });
    const double value = l.value().item();
    require_finite_loss(value, "train_reagg", epoch);
    result.losses.push_back(value);
    result.samples.push_back(gumbel_softmax(logits.value().data(), noise, tau, ChoiceMode::soft));
    ++counts[result.samples.back().selected];
    result.histogram.push_back(counts);

    tape.backward(l);
    gradient_step(tape, w, c.embed_weight, opt.lr, "train_reagg");
    gradient_step(tape, b, c.embed_bias, opt.lr, "train_reagg");
    if (result.padding) gradient_step(tape, program.delta, result.padding->delta, opt.lr, "train_reagg");
  }

  if (opt.tau_final) c.tau = *opt.tau_final;
  Tensor logits = c.embed_bias;
  const Tensor input = task_input();
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t d = 0; d < input.cols(); ++d) logits[j] += input[d] * c.embed_weight(d, j);
  c.selected = argmax(logits);
  c.mode = ChoiceMode::hard;
  guard.verify();
  return result;
}

std::string choice_to_json(const AggregatorChoice& choice) {
  json names = json::array();
  for (const auto a : choice.candidates) names.push_back(std::string(to_string(a)));
  json j{{"candidates", std::move(names)},
         {"embed_weight", detail::tensor_to_json(choice.embed_weight)},
         {"embed_bias", detail::tensor_to_json(choice.embed_bias)},
         {"tau", choice.tau},
         {"seed", choice.seed},
         {"mode", std::string(to_string(choice.mode))},
         {"source", std::string(to_string(choice.source))},
         {"selected", choice.selected ? json(*choice.selected) : json(nullptr)},
         {"selected_aggregator",
          choice.selected ? json(std::string(to_string(choice.candidates[*choice.selected]))) : json(nullptr)}};
  return j.dump();
}

AggregatorChoice choice_from_json(std::string_view text) {
  const json j = detail::parse_json(text);
  AggregatorChoice c;
  c.candidates.clear();
  for (const auto& name : detail::field<std::vector<std::string>>(j, "candidates")) {
    c.candidates.push_back(parse_aggregator(name));
  }
  c.embed_weight = detail::tensor_from_json(j.at("embed_weight"), "embed_weight");
  c.embed_bias = detail::tensor_from_json(j.at("embed_bias"), "embed_bias");
  c.tau = detail::field<double>(j, "tau");
  c.seed = detail::field_or<std::uint64_t>(j, "seed", 0);
  c.mode = parse_choice_mode(detail::field_or<std::string>(j, "mode", "soft"));
  c.source = parse_embedding_source(detail::field_or<std::string>(j, "source", "raw-mean"));
  if (j.contains("selected") && !j["selected"].is_null()) c.selected = detail::field<std::size_t>(j, "selected");
  c.validate();
  return c;
}

}  // namespace gnnr
