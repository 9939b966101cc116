#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gnnr/errors.hpp"
#include "gnnr/padding.hpp"
#include "gnnr/program.hpp"
#include "gnnr/synth.hpp"
#include "gnnr/training.hpp"
#include "support.hpp"

using namespace gnnr;

namespace {

PaddingSpec spec_with(std::size_t raw, std::vector<double> delta, PadPosition pos, std::uint64_t seed = 0) {
  PaddingSpec s;
  s.raw_dim = raw;
  s.pad_size = delta.size();
  s.position = pos;
  s.seed = seed;
  s.delta = Tensor::row_vector(std::move(delta));
  return s;
}

SynthTaskSpec level_spec(std::uint64_t seed, std::size_t feat_dim) {
  SynthTaskSpec s;
  s.seed = seed;
  s.num_nodes = 120;
  s.feat_dim = feat_dim;
  s.num_classes = 4;
  s.intra_p = 0.08;
  s.inter_p = 0.005;
  s.class_signal = ClassSignal::level;
  s.signal_scale = 1.0;
  s.feature_shift = -0.5;
  return s;
}

FrozenModel pretrained_on(const GraphDataset& ds, std::size_t epochs = 200) {
  Architecture a;
  a.in_dim = ds.feat_dim();
  a.out_dim = *ds.num_classes;
  TrainOptions opt;
  opt.epochs = epochs;
  return pretrain(ds, a, opt).model;
}

// Frozen linear map x -> w . x with w = [1, 1], one node with raw x = [0], y = 1.
std::pair<FrozenModel, GraphDataset> linear_toy() {
  ModelParams p;
  Layer l;
  l.weight = Tensor{{1}, {1}};
  l.bias = Tensor(1, 1);
  l.activation = Activation::none;
  l.propagate = false;
  p.layers.push_back(l);
  GraphDataset ds;
  ds.task_kind = TaskKind::node_regression;
  Graph g;
  g.num_nodes = 1;
  g.features = Tensor{{0}};
  g.node_labels = std::vector<double>{1.0};
  g.masks = Masks{{true}, {false}, {false}};
  ds.graphs.push_back(g);
  return {FrozenModel::freeze(p), ds};
}

Graph permute_nodes(const Graph& g, const std::vector<std::size_t>& perm) {
  Graph out = g;
  for (std::size_t v = 0; v < g.num_nodes; ++v)
    for (std::size_t c = 0; c < g.feat_dim(); ++c) out.features(perm[v], c) = g.features(v, c);
  for (auto& e : out.edges) e = {static_cast<std::uint32_t>(perm[e.source]), static_cast<std::uint32_t>(perm[e.target])};
  out.node_labels.reset();
  out.masks.reset();
  return out;
}

}  // namespace

TEST_SUITE("dare") {

TEST_CASE("zero-width padding is the identity") {
  SplitMix64 rng(1);
  const Tensor x = test::random_tensor(3, 4, rng);
  CHECK(apply_padding(x, zero_padding(4, 4, PadPosition::end)) == x);
}

TEST_CASE("padding positions place delta around x") {
  const Tensor x{{1, 2}};
  CHECK(apply_padding(x, spec_with(2, {9}, PadPosition::end)) == Tensor{{1, 2, 9}});
  CHECK(apply_padding(x, spec_with(2, {9}, PadPosition::front)) == Tensor{{9, 1, 2}});
  CHECK(apply_padding(x, spec_with(2, {9}, PadPosition::center)) == Tensor{{1, 9, 2}});
  CHECK_THROWS_AS(apply_padding(Tensor{{1, 2, 3}}, spec_with(2, {9}, PadPosition::end)), ShapeError);
}

TEST_CASE("raw coordinates survive padding bit-exactly") {
  SplitMix64 rng(2);
  const Tensor x = test::random_tensor(5, 3, rng);
  for (auto pos : {PadPosition::front, PadPosition::center, PadPosition::end, PadPosition::random}) {
    const PaddingSpec s = make_padding(3, 7, pos, 11);
    const Tensor out = apply_padding(x, s);
    const auto layout = s.layout();
    std::vector<std::size_t> sorted = layout;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(7);
    std::iota(iota.begin(), iota.end(), 0);
    CHECK(sorted == iota);
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t j = 0; j < 3; ++j) CHECK(out(r, layout[j]) == x(r, j));
    CHECK(s.padding_columns().size() == 4);
  }
  CHECK(make_padding(3, 7, PadPosition::random, 11).layout() == make_padding(3, 7, PadPosition::random, 11).layout());
}

TEST_CASE("required pad sizes for published dimension pairs") {
  CHECK(required_pad_size(3703, 1433) == 2270);
  CHECK(required_pad_size(3703, 500) == 3203);
  CHECK(required_pad_size(1433, 500) == 933);
  CHECK(required_pad_size(767, 745) == 22);
  CHECK(required_pad_size(12, 12) == 0);
  CHECK_THROWS_AS(required_pad_size(500, 1433), ValidationError);
}

TEST_CASE("linear toy converges to its closed-form delta") {
  const auto [model, ds] = linear_toy();
  const LossSpec loss{LossKind::mse, std::nullopt};
  const PaddingSpec start = spec_with(1, {0.0}, PadPosition::end);
  const auto newton = optimize_padding(model, ds, start, loss, ReprogramOptions{});
  CHECK(newton.spec.delta[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(newton.losses.back() < 1e-10);

  ReprogramOptions plain;
  plain.rule = StepRule::plain;
  plain.lr = 0.1;
  plain.epochs = 500;
  plain.early_stop = 0.0;
  CHECK(optimize_padding(model, ds, start, loss, plain).spec.delta[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("zero learning rate leaves delta unchanged") {
  const GraphDataset down = generate_synthetic(level_spec(100, 12));
  const FrozenModel model = pretrained_on(generate_synthetic(level_spec(0, 16)), 20);
  const PaddingSpec start = make_padding(12, 16, PadPosition::end, 3);
  for (auto rule : {StepRule::plain, StepRule::adam, StepRule::newton}) {
    ReprogramOptions opt;
    opt.rule = rule;
    opt.lr = 0.0;
    opt.epochs = 5;
    opt.early_stop = 0.0;
    CHECK(optimize_padding(model, down, start, LossSpec{}, opt).spec.delta == start.delta);
  }
}

TEST_CASE("padding lowers the training loss on a heterogeneous transfer") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const FrozenModel model = pretrained_on(generate_synthetic(level_spec(seed, 16)));
    const GraphDataset down = generate_synthetic(level_spec(seed + 100, 12));
    const PaddingSpec start = make_padding(12, 16, PadPosition::end, seed);
    const auto r = optimize_padding(model, down, start, LossSpec{}, ReprogramOptions{});
    CHECK(r.losses.back() < r.losses.front());
    CHECK(model.current_hash() == model.param_hash());
  }
}

TEST_CASE("inference on the training graph reproduces the training forward") {
  const FrozenModel model = pretrained_on(generate_synthetic(level_spec(0, 16)), 50);
  const GraphDataset down = generate_synthetic(level_spec(100, 12));
  const auto r = optimize_padding(model, down, make_padding(12, 16, PadPosition::center, 0), LossSpec{},
                                  ReprogramOptions{});
  Tape tape;
  const BoundModel bound = bind(tape, model.params(), false);
  TapeProgram program;
  program.padding = &r.spec;
  program.delta = tape.constant(r.spec.delta);
  const Tensor training = program_forward(tape, bound, prepare_graph(down.graphs[0], model.params()), program).value();
  CHECK(infer_with_padding(model, down.graphs[0], r.spec) == training);
  CHECK(infer_with_padding(model, down.graphs[0], r.spec) == forward(model, apply_padding(down.graphs[0], r.spec)));
}

TEST_CASE("padded inference is permutation-equivariant") {
  SplitMix64 rng(5);
  const FrozenModel model = pretrained_on(generate_synthetic(level_spec(0, 16)), 10);
  const Graph g = test::random_graph(7, 12, 0.4, rng);
  std::vector<std::size_t> perm{3, 6, 0, 1, 5, 2, 4};
  const PaddingSpec s = make_padding(12, 16, PadPosition::random, 1, 0.5);
  const Tensor a = infer_with_padding(model, g, s);
  const Tensor b = infer_with_padding(model, permute_nodes(g, perm), s);
  for (std::size_t v = 0; v < 7; ++v)
    for (std::size_t c = 0; c < a.cols(); ++c) CHECK(std::abs(a(v, c) - b(perm[v], c)) < 1e-12);
}

TEST_CASE("wrong widths are rejected") {
  const FrozenModel model = pretrained_on(generate_synthetic(level_spec(0, 16)), 0);
  const GraphDataset down = generate_synthetic(level_spec(100, 12));
  CHECK_THROWS_AS(optimize_padding(model, down, make_padding(10, 16, PadPosition::end, 0), LossSpec{},
                                   ReprogramOptions{}),
                  ValidationError);
  CHECK_THROWS_AS(infer_with_padding(model, down.graphs[0], make_padding(12, 15, PadPosition::end, 0)),
                  ValidationError);
}

TEST_CASE("unfrozen model is a contract error") {
  Architecture a;
  a.in_dim = 16;
  a.out_dim = 4;
  const FrozenModel loose = FrozenModel::unfrozen(init_params(a, 0));
  const GraphDataset down = generate_synthetic(level_spec(100, 12));
  CHECK_THROWS_AS(optimize_padding(loose, down, make_padding(12, 16, PadPosition::end, 0), LossSpec{},
                                   ReprogramOptions{}),
                  ContractError);
}

TEST_CASE("padding JSON round trip") {
  const PaddingSpec s = make_padding(5, 9, PadPosition::random, 42);
  CHECK(padding_from_json(padding_to_json(s)) == s);
}

}  // TEST_SUITE
