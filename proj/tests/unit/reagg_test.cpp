#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gnnr/errors.hpp"
#include "gnnr/grad_check.hpp"
#include "gnnr/loss.hpp"
#include "gnnr/program.hpp"
#include "gnnr/reagg.hpp"
#include "gnnr/synth.hpp"
#include "gnnr/training.hpp"
#include "support.hpp"

using namespace gnnr;

namespace {

FrozenModel small_model(std::size_t in, std::size_t out, std::uint64_t seed) {
  Architecture a;
  a.in_dim = in;
  a.out_dim = out;
  a.hidden_dim = 6;
  return FrozenModel::freeze(init_params(a, seed));
}

std::vector<double> softmax(const std::vector<double>& z) {
  const double top = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += p[i] = std::exp(z[i] - top);
  for (auto& v : p) v /= total;
  return p;
}

GraphDataset node_task(std::uint64_t seed) {
  SynthTaskSpec s;
  s.seed = seed;
  s.num_nodes = 60;
  s.feat_dim = 3;
  s.num_classes = 2;
  s.intra_p = 0.15;
  s.inter_p = 0.05;
  return generate_synthetic(s);
}

}  // namespace

TEST_SUITE("mere") {

TEST_CASE("zero embedding weights give zero logits") {
  SplitMix64 rng(1);
  const Graph g = test::random_graph(5, 3, 0.5, rng);
  AggregatorChoice c = make_choice({kAllAggregators.begin(), kAllAggregators.end()}, 3, 0);
  c.embed_weight.fill(0.0);
  CHECK(task_embedding(c, small_model(3, 2, 0), g) == Tensor(1, 4, 0.0));
}

TEST_CASE("graphs with the same mean feature share logits") {
  SplitMix64 rng(2);
  const Graph a = test::random_graph(4, 3, 0.5, rng);
  Graph b = test::random_graph(4, 3, 0.9, rng);
  b.features = a.features;
  std::swap(b.features.data()[0], b.features.data()[3]);
  std::swap(b.features.data()[1], b.features.data()[4]);
  std::swap(b.features.data()[2], b.features.data()[5]);
  const AggregatorChoice c = make_choice({kAllAggregators.begin(), kAllAggregators.end()}, 3, 5, 1.0);
  const FrozenModel m = small_model(3, 2, 0);
  CHECK(max_abs_difference(task_embedding(c, m, a), task_embedding(c, m, b)) < 1e-15);
}

TEST_CASE("empty graph has no embedding") {
  Graph g;
  g.features = Tensor(0, 3);
  const AggregatorChoice c = make_choice({Aggregator::mean}, 3, 0);
  CHECK_THROWS_AS(task_embedding(c, small_model(3, 2, 0), g), ValidationError);
}

TEST_CASE("equal logits without noise give uniform weights") {
  const std::vector<double> logits(4, 0.7), zeros(4, 0.0);
  for (double tau : {0.1, 1.0, 5.0})
    for (double w : gumbel_softmax(logits, zeros, tau, ChoiceMode::soft).weights) CHECK(w == doctest::Approx(0.25));
}

TEST_CASE("low temperature saturates the softmax") {
  const std::vector<double> logits{10.0, 0.0}, zeros(2, 0.0);
  const auto s = gumbel_softmax(logits, zeros, 0.1, ChoiceMode::soft);
  CHECK(s.weights[0] > 0.999);
  const auto h = gumbel_softmax(logits, zeros, 0.1, ChoiceMode::hard);
  CHECK(h.weights == std::vector<double>{1.0, 0.0});
  CHECK(h.selected == 0);
}

TEST_CASE("hard sample is the argmax of logits plus noise") {
  const std::vector<double> logits{0.2, -0.4, 0.9};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = gumbel_softmax(logits, 1.0, seed, ChoiceMode::hard);
    std::vector<double> z(3);
    for (std::size_t i = 0; i < 3; ++i) z[i] = logits[i] + s.noise[i];
    CHECK(s.selected == static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin()));
    const auto soft = gumbel_softmax(logits, 1.0, seed, ChoiceMode::soft);
    CHECK(soft.noise == s.noise);
    double total = 0.0;
    for (double w : soft.weights) total += w;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("selection frequencies follow the softmax") {
  const std::vector<double> logits{0.5, -0.3, 1.2, 0.0};
  const auto p = softmax(logits);
  std::vector<double> freq(4, 0.0);
  const std::size_t n = 100000;
  for (std::uint64_t seed = 0; seed < n; ++seed)
    freq[gumbel_softmax(logits, 1.0, seed, ChoiceMode::hard).selected] += 1.0 / static_cast<double>(n);
  double tv = 0.0;
  for (std::size_t i = 0; i < 4; ++i) tv += 0.5 * std::abs(freq[i] - p[i]);
  CHECK(tv < 0.01);
}

TEST_CASE("single candidate matches the plain forward") {
  SplitMix64 rng(3);
  const Graph g = test::random_graph(6, 3, 0.5, rng);
  const FrozenModel m = small_model(3, 2, 1);
  for (auto a : kAllAggregators) {
    const AggregatorChoice c = make_choice({a}, 3, 0);
    CHECK(select_and_forward(m, g, c, 7).first == forward(m, g, a));
  }
}

TEST_CASE("one-hot mixture equals the hard forward of that candidate") {
  SplitMix64 rng(4);
  const Graph g = test::random_graph(6, 3, 0.5, rng);
  const FrozenModel m = small_model(3, 2, 1);
  const std::vector<Aggregator> all{kAllAggregators.begin(), kAllAggregators.end()};
  for (std::size_t k = 0; k < all.size(); ++k) {
    Tape tape;
    std::vector<double> onehot(all.size(), 0.0);
    onehot[k] = 1.0;
    TapeProgram program;
    program.plan = {all, tape.constant(Tensor::row_vector(onehot))};
    const Tensor mixed =
        program_forward(tape, bind(tape, m.params(), false), prepare_graph(g, m.params()), program).value();
    AggregatorChoice c = make_choice(all, 3, 0);
    c.mode = ChoiceMode::hard;
    c.selected = k;
    CHECK(mixed == select_and_forward(m, g, c).first);
  }
}

TEST_CASE("hard mode is deterministic") {
  SplitMix64 rng(5);
  const Graph g = test::random_graph(6, 3, 0.5, rng);
  const FrozenModel m = small_model(3, 2, 1);
  AggregatorChoice c = make_choice({kAllAggregators.begin(), kAllAggregators.end()}, 3, 2, 1.0);
  c.mode = ChoiceMode::hard;
  const auto first = select_and_forward(m, g, c, 0);
  for (std::uint64_t seed = 1; seed < 10; ++seed) {
    const auto again = select_and_forward(m, g, c, seed);
    CHECK(again.first == first.first);
    CHECK(again.second.selected == first.second.selected);
  }
  const Tensor logits = task_embedding(c, m, g);
  CHECK(first.second.selected == static_cast<std::size_t>(std::max_element(logits.data().begin(), logits.data().end()) -
                                                          logits.data().begin()));
}

TEST_CASE("unsupported candidate is rejected") {
  SplitMix64 rng(6);
  const Graph g = test::random_graph(4, 3, 0.5, rng);
  Architecture a;
  a.in_dim = 3;
  a.out_dim = 2;
  a.attention_params = false;
  const FrozenModel m = FrozenModel::freeze(init_params(a, 0));
  CHECK_THROWS_AS(select_and_forward(m, g, make_choice({Aggregator::attention}, 3, 0)), ValidationError);
}

TEST_CASE("embedding weight gradients match central differences") {
  SplitMix64 rng(7);
  const Graph g = test::random_graph(7, 3, 0.5, rng, 2);
  const FrozenModel m = small_model(3, 2, 3);
  const AggregatorChoice c = make_choice({kAllAggregators.begin(), kAllAggregators.end()}, 3, 1, 0.5);
  const Tensor input = embedding_input(c, m, g);
  const auto noise = gumbel_noise(4, rng);
  const PreparedGraph prepared = prepare_graph(g, m.params());
  const Targets targets = node_targets(g, Split::train);
  const auto report = grad_check([&](Tape& t, const Var& w) {
    const Var logits = add_row(matmul(t.constant(input), w), t.constant(c.embed_bias));
    TapeProgram program;
    program.plan = {c.candidates, gumbel_weights(logits, noise, 1.0, ChoiceMode::soft)};
    return loss_on_rows(program_forward(t, bind(t, m.params(), false), prepared, program), targets, LossSpec{});
  }, c.embed_weight, 1e-5, 1e-5);
  INFO("max rel error " << report.max_rel_error);
  CHECK(report.passed);
}

TEST_CASE("zero learning rate leaves the embedding unchanged") {
  const GraphDataset ds = node_task(0);
  const FrozenModel m = small_model(3, 2, 0);
  const AggregatorChoice c = make_choice({kAllAggregators.begin(), kAllAggregators.end()}, 3, 4);
  ReaggOptions opt;
  opt.lr = 0.0;
  opt.epochs = 5;
  const auto r = train_reagg(m, ds, c, LossSpec{}, opt);
  CHECK(r.choice.embed_weight == c.embed_weight);
  CHECK(r.choice.embed_bias == c.embed_bias);
  CHECK(r.choice.mode == ChoiceMode::hard);
  REQUIRE(r.choice.selected.has_value());
  CHECK(r.histogram.size() == 5);
  std::size_t total = 0;
  for (auto n : r.histogram.back()) total += n;
  CHECK(total == 5);
  CHECK(m.current_hash() == m.param_hash());
}

TEST_CASE("random embeddings at tau 1 select every candidate") {
  const GraphDataset ds = node_task(1);
  const FrozenModel m = small_model(3, 2, 0);
  std::vector<std::size_t> counts(4, 0);
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    const AggregatorChoice c = make_choice({kAllAggregators.begin(), kAllAggregators.end()}, 3, trial, 1.0);
    ++counts[select_and_forward(m, ds.graphs[0], c, trial).second.selected];
  }
  for (auto n : counts) CHECK(n >= 1);
}

TEST_CASE("annealing from 5 to 0.1 saturates the final weights") {
  // Per seed the final sample can land between two near-tied candidates, so
  // saturation is checked on the median over seeds.
  const FrozenModel m = small_model(3, 2, 0);
  std::vector<double> top;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GraphDataset ds = node_task(seed);
    AggregatorChoice c = make_choice({kAllAggregators.begin(), kAllAggregators.end()}, 3, seed);
    c.tau = 5.0;
    ReaggOptions opt;
    opt.seed = seed;
    opt.epochs = 50;
    opt.tau_final = 0.1;
    const auto r = train_reagg(m, ds, c, LossSpec{}, opt);
    const auto& w = r.samples.back().weights;
    top.push_back(*std::max_element(w.begin(), w.end()));
    CHECK(r.choice.tau == 0.1);
  }
  std::sort(top.begin(), top.end());
  CHECK((top[4] + top[5]) / 2.0 > 0.99);
}

TEST_CASE("choice JSON round trip") {
  AggregatorChoice c = make_choice({Aggregator::sum, Aggregator::max}, 5, 3);
  c.selected = 1;
  c.mode = ChoiceMode::hard;
  const AggregatorChoice back = choice_from_json(choice_to_json(c));
  CHECK(back == c);
  CHECK(selected_aggregator(back) == Aggregator::max);
}

}  // TEST_SUITE
