#include <benchmark/benchmark.h>

#include "gnnr/edge_slim.hpp"
#include "gnnr/padding.hpp"
#include "gnnr/program.hpp"
#include "gnnr/reagg.hpp"
#include "gnnr/synth.hpp"
#include "gnnr/training.hpp"

using namespace gnnr;

namespace {

GraphDataset node_task(std::size_t nodes, std::size_t feat_dim, std::uint64_t seed = 0) {
  SynthTaskSpec s;
  s.seed = seed;
  s.num_nodes = nodes;
  s.feat_dim = feat_dim;
  s.num_classes = 4;
  s.intra_p = 20.0 / static_cast<double>(nodes);
  s.inter_p = 2.0 / static_cast<double>(nodes);
  return generate_synthetic(s);
}

FrozenModel random_model(std::size_t in, std::size_t out, Aggregator agg = Aggregator::mean) {
  Architecture a;
  a.in_dim = in;
  a.out_dim = out;
  a.aggregator = agg;
  return FrozenModel::freeze(init_params(a, 0));
}

void BM_Forward(benchmark::State& state) {
  const auto agg = kAllAggregators[static_cast<std::size_t>(state.range(1))];
  const GraphDataset ds = node_task(static_cast<std::size_t>(state.range(0)), 16);
  const FrozenModel model = random_model(16, 4, agg);
  for (auto _ : state) benchmark::DoNotOptimize(forward(model, ds.graphs[0]));
  state.SetLabel(std::string(to_string(agg)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ds.graphs[0].num_edges()));
}
BENCHMARK(BM_Forward)->ArgsProduct({{500, 2000}, {0, 1, 2, 3}})->Unit(benchmark::kMicrosecond);

void BM_ForwardBackward(benchmark::State& state) {
  const GraphDataset ds = node_task(static_cast<std::size_t>(state.range(0)), 16);
  const FrozenModel model = random_model(16, 4);
  const PreparedGraph prepared = prepare_graph(ds.graphs[0], model.params());
  const Targets targets = node_targets(ds.graphs[0], Split::train);
  for (auto _ : state) {
    Tape tape;
    TapeProgram program;
    program.edge_weights = tape.parameter(prepared.edge_weights);
    const Var loss = loss_on_rows(program_forward(tape, bind(tape, model.params(), false), prepared, program),
                                  targets, LossSpec{});
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(program.edge_weights));
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(500)->Arg(2000)->Unit(benchmark::kMicrosecond);

void BM_OptimizePadding(benchmark::State& state) {
  const GraphDataset down = node_task(300, 12, 1);
  const FrozenModel model = random_model(16, 4);
  const PaddingSpec start = make_padding(12, 16, PadPosition::end, 0);
  ReprogramOptions opt;
  opt.rule = static_cast<StepRule>(state.range(0));
  opt.lr = opt.rule == StepRule::newton ? 1.0 : 0.1;
  opt.epochs = 10;
  opt.early_stop = 0.0;
  for (auto _ : state) benchmark::DoNotOptimize(optimize_padding(model, down, start, LossSpec{}, opt));
  state.SetLabel(std::string(to_string(opt.rule)));
}
BENCHMARK(BM_OptimizePadding)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_EdgeGradients(benchmark::State& state) {
  const GraphDataset ds = node_task(static_cast<std::size_t>(state.range(0)), 8);
  const FrozenModel model = random_model(8, 4);
  for (auto _ : state) benchmark::DoNotOptimize(edge_gradients(model, ds.graphs[0], LossSpec{}));
}
BENCHMARK(BM_EdgeGradients)->Arg(500)->Arg(2000)->Unit(benchmark::kMicrosecond);

void BM_GumbelSoftmax(benchmark::State& state) {
  const std::vector<double> logits{0.5, -0.3, 1.2, 0.0};
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(gumbel_softmax(logits, 1.0, seed++, ChoiceMode::hard));
}
BENCHMARK(BM_GumbelSoftmax);

}  // namespace

BENCHMARK_MAIN();
