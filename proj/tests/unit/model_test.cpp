#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "gnnr/errors.hpp"
#include "gnnr/graph_io.hpp"
#include "gnnr/loss.hpp"
#include "gnnr/metrics.hpp"
#include "gnnr/model.hpp"
#include "gnnr/model_io.hpp"
#include "gnnr/synth.hpp"
#include "gnnr/training.hpp"
#include "support.hpp"

using namespace gnnr;

namespace {

// Message passing written as loops over each node's neighbor list.
Tensor naive_forward(const ModelParams& p, const Graph& g) {
  std::vector<std::vector<std::pair<std::size_t, double>>> in(g.num_nodes);
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    const auto [u, v] = g.edges[e];
    in[v].push_back({u, g.edge_weights[e]});
    if (!g.directed && u != v) in[u].push_back({v, g.edge_weights[e]});
  }
  if (p.self_loops)
    for (std::size_t v = 0; v < g.num_nodes; ++v) in[v].push_back({v, 1.0});

  std::vector<std::vector<double>> h(g.num_nodes);
  for (std::size_t v = 0; v < g.num_nodes; ++v) h[v].assign(g.features.row(v).begin(), g.features.row(v).end());
  for (const auto& layer : p.layers) {
    const std::size_t out = layer.weight.cols();
    std::vector<std::vector<double>> z(g.num_nodes, std::vector<double>(out, 0.0));
    for (std::size_t v = 0; v < g.num_nodes; ++v)
      for (std::size_t c = 0; c < out; ++c)
        for (std::size_t k = 0; k < h[v].size(); ++k) z[v][c] += h[v][k] * layer.weight(k, c);
    auto next = z;
    if (layer.propagate) {
      for (std::size_t v = 0; v < g.num_nodes; ++v) {
        for (std::size_t c = 0; c < out; ++c) {
          double acc = 0.0, wsum = 0.0, best = -1e300;
          bool any = false;
          for (const auto& [u, w] : in[v]) {
            acc += w * z[u][c];
            wsum += w;
            if (w != 0.0) {
              any = true;
              best = std::max(best, w * z[u][c]);
            }
          }
          if (p.aggregator == Aggregator::sum) next[v][c] = acc;
          if (p.aggregator == Aggregator::mean) next[v][c] = wsum == 0.0 ? 0.0 : acc / wsum;
          if (p.aggregator == Aggregator::max) next[v][c] = any ? best : 0.0;
        }
      }
    }
    for (std::size_t v = 0; v < g.num_nodes; ++v)
      for (std::size_t c = 0; c < out; ++c) {
        next[v][c] += layer.bias[c];
        if (layer.activation == Activation::relu) next[v][c] = std::max(0.0, next[v][c]);
      }
    h = std::move(next);
  }
  Tensor result(g.num_nodes, p.out_dim());
  for (std::size_t v = 0; v < g.num_nodes; ++v)
    for (std::size_t c = 0; c < p.out_dim(); ++c) result(v, c) = h[v][c];
  return result;
}

Architecture arch_for(std::size_t in, std::size_t out) {
  Architecture a;
  a.in_dim = in;
  a.out_dim = out;
  a.hidden_dim = 8;
  return a;
}

SynthTaskSpec separable_spec() {
  SynthTaskSpec s;
  s.num_nodes = 80;
  s.feat_dim = 4;
  s.num_classes = 2;
  s.noise_std = 0.0;
  s.intra_p = 0.1;
  s.inter_p = 0.01;
  return s;
}

}  // namespace

TEST_SUITE("gnn-core") {

TEST_CASE("identity layer without edges returns the features") {
  SplitMix64 rng(1);
  Graph g;
  g.num_nodes = 4;
  g.features = test::random_tensor(4, 3, rng);
  ModelParams p;
  Layer l;
  l.weight = Tensor{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  l.bias = Tensor(1, 3);
  l.activation = Activation::none;
  p.layers.push_back(l);
  const FrozenModel m = FrozenModel::freeze(p);
  CHECK(forward(m, g) == g.features);
}

TEST_CASE("zero weights give uniform logits and ln K loss") {
  const GraphDataset ds = generate_synthetic(separable_spec());
  ModelParams p = init_params(arch_for(4, 3), 0);
  for (auto& l : p.layers) {
    l.weight.fill(0.0);
    l.bias.fill(0.0);
  }
  const FrozenModel m = FrozenModel::freeze(p);
  CHECK(forward(m, ds.graphs[0]) == Tensor(80, 3, 0.0));
  LossSpec loss;
  const Metrics metrics = evaluate(m, ds, loss, Split::train);
  CHECK(metrics.loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("forward matches a per-node loop on a 6-node graph") {
  SplitMix64 rng(31);
  for (auto agg : {Aggregator::sum, Aggregator::mean, Aggregator::max}) {
    for (int trial = 0; trial < 5; ++trial) {
      Graph g = test::random_graph(6, 3, 0.5, rng, 2, trial % 2 == 1);
      Architecture a = arch_for(3, 2);
      a.aggregator = agg;
      a.self_loops = trial != 3;
      ModelParams p = init_params(a, static_cast<std::uint64_t>(trial));
      for (auto& l : p.layers)
        for (auto& b : l.bias.data()) b = rng.normal(0.0, 0.1);
      const FrozenModel m = FrozenModel::freeze(p);
      CHECK(max_abs_difference(forward(m, g), naive_forward(p, g)) < 1e-12);
    }
  }
}

TEST_CASE("wrong input width names the expected in_dim") {
  const FrozenModel m = FrozenModel::freeze(init_params(arch_for(5, 2), 0));
  const GraphDataset ds = generate_synthetic(separable_spec());
  CHECK_THROWS_WITH_AS(forward(m, ds.graphs[0]), doctest::Contains("in_dim=5"), ValidationError);
}

TEST_CASE("attention override needs attention parameters") {
  Architecture a = arch_for(4, 2);
  a.attention_params = false;
  const FrozenModel m = FrozenModel::freeze(init_params(a, 0));
  const GraphDataset ds = generate_synthetic(separable_spec());
  CHECK_FALSE(m.supports(Aggregator::attention));
  CHECK_THROWS_AS(forward(m, ds.graphs[0], Aggregator::attention), ValidationError);
}

TEST_CASE("mean-pool readout emits one row") {
  SynthTaskSpec s = separable_spec();
  s.task_kind = TaskKind::graph_classification;
  s.num_graphs = 4;
  s.num_nodes = 5;
  const GraphDataset ds = generate_synthetic(s);
  Architecture a = arch_for(4, 2);
  a.readout = Readout::mean_pool;
  const FrozenModel m = FrozenModel::freeze(init_params(a, 0));
  CHECK(forward(m, ds.graphs[1]).shape() == Shape{1, 2});
}

TEST_CASE("noise-free two-class task is fit exactly within 200 epochs") {
  const GraphDataset ds = generate_synthetic(separable_spec());
  TrainOptions opt;
  opt.epochs = 200;
  opt.lr = 0.1;
  const auto result = pretrain(ds, arch_for(4, 2), opt);
  CHECK(result.model.frozen());
  CHECK(result.losses.size() == 200);
  CHECK(*evaluate(result.model, ds, LossSpec{}, Split::train).accuracy == 1.0);
}

TEST_CASE("zero epochs freezes the initialization") {
  const GraphDataset ds = generate_synthetic(separable_spec());
  TrainOptions opt;
  opt.epochs = 0;
  opt.seed = 4;
  const auto a = pretrain(ds, arch_for(4, 2), opt);
  CHECK(a.model.params() == init_params(arch_for(4, 2), 4));
  CHECK(a.model.param_hash() == a.model.current_hash());
  CHECK(pretrain(ds, arch_for(4, 2), opt).model.param_hash() == a.model.param_hash());
}

TEST_CASE("same seed gives the same hash") {
  const GraphDataset ds = generate_synthetic(separable_spec());
  TrainOptions opt;
  opt.epochs = 20;
  opt.seed = 9;
  const auto a = pretrain(ds, arch_for(4, 2), opt);
  const auto b = pretrain(ds, arch_for(4, 2), opt);
  CHECK(a.model.param_hash() == b.model.param_hash());
  opt.seed = 10;
  CHECK(pretrain(ds, arch_for(4, 2), opt).model.param_hash() != a.model.param_hash());
}

TEST_CASE("perfect predictions score accuracy 1") {
  Targets t{{0, 1, 2, 3}, {1, 0, 2, 1}};
  Tensor out(4, 3, 0.0);
  for (std::size_t i = 0; i < 4; ++i) out(i, static_cast<std::size_t>(t.values[i])) = 5.0;
  const Metrics m = compute_metrics(out, t, LossSpec{}, TaskKind::node_classification);
  CHECK(*m.accuracy == 1.0);
  CHECK(m.count == 4);
}

TEST_CASE("constant mean regressor has rmse equal to the population std") {
  SplitMix64 rng(2);
  Targets t;
  double mean = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    t.rows.push_back(i);
    t.values.push_back(rng.normal(3.0, 2.0));
    mean += t.values.back() / 20.0;
  }
  double var = 0.0;
  for (double y : t.values) var += (y - mean) * (y - mean) / 20.0;
  LossSpec loss{LossKind::mse, std::nullopt};
  const Metrics m = compute_metrics(Tensor(20, 1, mean), t, loss, TaskKind::node_regression);
  CHECK(*m.rmse == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  CHECK(m.loss == doctest::Approx(var).epsilon(1e-12));
}

TEST_CASE("perfectly separated scores have AUC 1") {
  const std::vector<double> scores{0.1, 0.3, 0.35, 0.8, 0.9};
  const std::vector<int> pos{0, 0, 0, 1, 1};
  CHECK(*roc_auc(scores, pos) == 1.0);
  const std::vector<int> none{0, 0, 0, 0, 0};
  CHECK_FALSE(roc_auc(scores, none).has_value());
  const std::vector<double> tied{0.5, 0.5, 0.5, 0.5, 0.5};
  CHECK(*roc_auc(tied, pos) == 0.5);
}

TEST_CASE("binary classification reports AUC") {
  const GraphDataset ds = generate_synthetic(separable_spec());
  TrainOptions opt;
  opt.epochs = 100;
  const auto r = pretrain(ds, arch_for(4, 2), opt);
  const Metrics m = evaluate(r.model, ds, LossSpec{}, Split::test);
  REQUIRE(m.roc_auc.has_value());
  CHECK(*m.roc_auc > 0.9);
}

TEST_CASE("empty mask is an error") {
  GraphDataset ds = split_dataset(generate_synthetic(separable_spec()), 1.0, 0.0, 0.0, 0);
  const FrozenModel m = FrozenModel::freeze(init_params(arch_for(4, 2), 0));
  CHECK_THROWS_AS(evaluate(m, ds, LossSpec{}, Split::val), ValidationError);
}

TEST_CASE("loss only reads the output slice") {
  SplitMix64 rng(8);
  const Tensor outputs = test::random_tensor(3, 5, rng);
  Tape tape;
  const Var o = tape.parameter(outputs);
  const LossSpec spec{LossKind::cross_entropy, OutputSlice{1, 2}};
  tape.backward(loss_on_rows(o, Targets{{0, 2}, {1, 0}}, spec));
  const Tensor g = tape.grad(o);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c : {0u, 3u, 4u}) CHECK(g(r, c) == 0.0);
  CHECK(g(0, 1) != 0.0);
  CHECK(g(1, 1) == 0.0);
  CHECK_THROWS_AS((LossSpec{LossKind::cross_entropy, OutputSlice{4, 2}}.slice_for(5)), ValidationError);
}

TEST_CASE("model save/load keeps the hash") {
  const FrozenModel m = FrozenModel::freeze(init_params(arch_for(4, 3), 1));
  const auto dir = test::temp_dir("model");
  save_model(m, dir / "m.json");
  const FrozenModel back = load_model(dir / "m.json");
  CHECK(back.param_hash() == m.param_hash());
  CHECK(back.params() == m.params());
  CHECK(back.frozen());
}

TEST_CASE("tampered weight is an integrity error") {
  const FrozenModel m = FrozenModel::freeze(init_params(arch_for(4, 3), 1));
  auto j = nlohmann::json::parse(model_to_json(m));
  auto& w = j["layers"][0]["weight"]["data"][0];
  w = w.get<double>() + 1e-9;
  CHECK_THROWS_AS(model_from_json(j.dump()), IntegrityError);
}

TEST_CASE("hash ignores key order") {
  const FrozenModel m = FrozenModel::freeze(init_params(arch_for(4, 3), 1));
  const auto sorted = nlohmann::ordered_json::parse(model_to_json(m));
  nlohmann::ordered_json reversed;
  for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) reversed[it.key()] = it.value();
  const std::string text = reversed.dump(2);
  REQUIRE(text != sorted.dump(2));
  CHECK(model_from_json(text).param_hash() == m.param_hash());
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("hash guard catches changed parameters") {
  const FrozenModel m = FrozenModel::freeze(init_params(arch_for(4, 3), 1));
  CHECK_NOTHROW(HashGuard(m, "test").verify());
  const FrozenModel loose = FrozenModel::unfrozen(init_params(arch_for(4, 3), 1));
  CHECK_THROWS_AS(HashGuard(loose, "test"), ContractError);
}

TEST_CASE("single-candidate sweep equals default evaluation") {
  const GraphDataset ds = generate_synthetic(separable_spec());
  const FrozenModel m = FrozenModel::freeze(init_params(arch_for(4, 2), 3));
  const std::array one{Aggregator::mean};
  const auto sweep = aggregator_sweep(m, ds, LossSpec{}, one);
  const Metrics plain = evaluate(m, ds, LossSpec{}, Split::test);
  REQUIRE(sweep.size() == 1);
  CHECK(sweep[0].metrics.loss == plain.loss);
  CHECK(sweep[0].metrics.accuracy == plain.accuracy);
  CHECK_THROWS_AS(aggregator_sweep(m, ds, LossSpec{}, std::span<const Aggregator>{}), ValidationError);
}

TEST_CASE("graph without edges ties every aggregator") {
  GraphDataset ds = generate_synthetic(separable_spec());
  ds.graphs[0].edges.clear();
  ds.graphs[0].edge_weights.clear();
  Architecture a = arch_for(4, 2);
  a.self_loops = false;
  const FrozenModel m = FrozenModel::freeze(init_params(a, 3));
  const auto sweep = aggregator_sweep(m, ds, LossSpec{}, kAllAggregators);
  for (const auto& e : sweep) {
    CHECK(e.metrics.loss == sweep[0].metrics.loss);
    CHECK(e.metrics.accuracy == sweep[0].metrics.accuracy);
  }
}

TEST_CASE("aggregators disagree on a synthetic task") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SynthTaskSpec s;
    s.seed = seed;
    s.num_nodes = 200;
    s.feat_dim = 4;
    s.intra_p = 0.06;
    s.inter_p = 0.02;
    const GraphDataset ds = generate_synthetic(s);
    TrainOptions opt;
    opt.epochs = 100;
    opt.seed = seed;
    const auto r = pretrain(ds, arch_for(4, 4), opt);
    const auto sweep = aggregator_sweep(r.model, ds, LossSpec{}, kAllAggregators);
    double lo = 1.0, hi = 0.0;
    for (const auto& e : sweep) {
      lo = std::min(lo, *e.metrics.accuracy);
      hi = std::max(hi, *e.metrics.accuracy);
    }
    CHECK(hi > lo);
  }
}

TEST_CASE("step rules") {
  CHECK(parse_step_rule("adam") == StepRule::adam);
  CHECK(parse_step_rule("newton") == StepRule::newton);
  CHECK_THROWS_AS(parse_step_rule("sgdm"), ValidationError);
  Tape tape;
  const Var x = tape.parameter(Tensor::scalar(1.0));
  tape.backward(sum(square(x)));
  Tensor value = Tensor::scalar(1.0);
  Stepper plain(StepRule::plain, 0.25);
  plain.step(0, tape, x, value, "test");
  CHECK(value.item() == 0.5);
  Stepper newton(StepRule::newton, 1.0);
  CHECK_THROWS_AS(newton.step(0, tape, x, value, "test"), ValidationError);
}

}  // TEST_SUITE
