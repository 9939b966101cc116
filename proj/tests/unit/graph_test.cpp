#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "gnnr/errors.hpp"
#include "gnnr/graph_io.hpp"
#include "gnnr/synth.hpp"
#include "support.hpp"

using namespace gnnr;

namespace {

SynthTaskSpec small_spec() {
  SynthTaskSpec s;
  s.num_nodes = 60;
  s.feat_dim = 6;
  s.num_classes = 3;
  s.intra_p = 0.2;
  s.inter_p = 0.02;
  return s;
}

std::size_t argmin_distance(std::span<const double> x, const std::vector<Tensor>& means) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < means.size(); ++c) {
    double d = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) d += (x[j] - means[c][j]) * (x[j] - means[c][j]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("graph-core") {

TEST_CASE("minimal graph file loads") {
  const Graph g = graph_from_json(
      R"({"num_nodes": 2, "directed": false, "features": [[1,2,3],[4,5,6]], "edges": [[0,1]]})");
  CHECK(g.num_nodes == 2);
  CHECK(g.feat_dim() == 3);
  CHECK(g.num_edges() == 1);
  CHECK(g.edge_weights == std::vector<double>{1.0});
}

TEST_CASE("edge past num_nodes names the field") {
  const char* text = R"({"num_nodes": 2, "features": [[1],[2]], "edges": [[0,5]]})";
  CHECK_THROWS_WITH_AS(graph_from_json(text), doctest::Contains("edge target out of range"),
                       ValidationError);
}

TEST_CASE("malformed JSON reports a byte offset") {
  try {
    graph_from_json(R"({"num_nodes": 2, "features": [[1],[2]] "edges": []})");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.byte_offset() > 30);
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }
}

TEST_CASE("symmetric pair in an undirected file is one logical edge") {
  const Graph g = graph_from_json(
      R"({"num_nodes": 3, "features": [[1],[2],[3]], "edges": [[0,1],[1,0],[1,2]]})");
  CHECK(g.num_edges() == 2);
}

TEST_CASE("save then load is bit-identical on random graphs") {
  SplitMix64 rng(7);
  const auto dir = test::temp_dir("roundtrip");
  for (int trial = 0; trial < 20; ++trial) {
    Graph g = test::random_graph(3 + rng.below(10), 1 + rng.below(5), 0.4, rng, 3, trial % 2 == 1);
    for (auto& v : g.features.data()) v *= std::pow(10.0, static_cast<double>(rng.below(20)) - 10.0);
    save_graph(g, dir / "g.json");
    const Graph back = load_graph(dir / "g.json");
    CHECK(back == g);
  }
}

TEST_CASE("dataset round trip") {
  SynthTaskSpec s = small_spec();
  s.task_kind = TaskKind::graph_classification;
  s.num_graphs = 5;
  s.num_nodes = 6;
  const GraphDataset ds = generate_synthetic(s);
  CHECK(dataset_from_json(dataset_to_json(ds)) == ds);
}

TEST_CASE("synthetic generation is deterministic") {
  const auto a = dataset_to_json(generate_synthetic(small_spec()));
  const auto b = dataset_to_json(generate_synthetic(small_spec()));
  CHECK(a == b);
  SynthTaskSpec other = small_spec();
  other.seed = 1;
  CHECK(dataset_to_json(generate_synthetic(other)) != a);
}

TEST_CASE("intra 1 inter 0 gives only same-class edges") {
  SynthTaskSpec s = small_spec();
  s.num_classes = 2;
  s.num_nodes = 20;
  s.intra_p = 1.0;
  s.inter_p = 0.0;
  const GraphDataset ds = generate_synthetic(s);
  const Graph& g = ds.graphs[0];
  const auto& labels = std::get<std::vector<std::int64_t>>(*g.node_labels);
  REQUIRE(g.num_edges() == 2 * (10 * 9 / 2));
  for (const auto& e : g.edges) CHECK(labels[e.source] == labels[e.target]);
}

TEST_CASE("noise-free features are classified exactly by nearest class mean") {
  for (auto signal : {ClassSignal::one_hot, ClassSignal::level}) {
    SynthTaskSpec s = small_spec();
    s.noise_std = 0.0;
    s.class_signal = signal;
    s.feature_shift = 0.3;
    const GraphDataset ds = generate_synthetic(s);
    std::vector<Tensor> means;
    for (std::size_t c = 0; c < s.num_classes; ++c) means.push_back(class_mean(s, c));
    const Graph& g = ds.graphs[0];
    const auto& labels = std::get<std::vector<std::int64_t>>(*g.node_labels);
    std::size_t correct = 0;
    for (std::size_t v = 0; v < g.num_nodes; ++v)
      correct += argmin_distance(g.features.row(v), means) == static_cast<std::size_t>(labels[v]);
    CHECK(correct == g.num_nodes);
  }
}

TEST_CASE("synthetic masks partition every node") {
  const GraphDataset ds = generate_synthetic(small_spec());
  const Graph& g = ds.graphs[0];
  std::size_t total = 0;
  for (auto s : {Split::train, Split::val, Split::test}) total += mask_indices(g, s).size();
  CHECK(total == g.num_nodes);
  CHECK(mask_indices(g, Split::train).size() == 36);
}

TEST_CASE("invalid synthetic spec is rejected") {
  SynthTaskSpec s = small_spec();
  s.inter_p = s.intra_p;
  CHECK_THROWS_AS(generate_synthetic(s), ValidationError);
}

TEST_CASE("split of 10 graphs by 0.6/0.2/0.2") {
  SynthTaskSpec s = small_spec();
  s.task_kind = TaskKind::graph_classification;
  s.num_graphs = 10;
  s.num_nodes = 4;
  const GraphDataset ds = split_dataset(generate_synthetic(s), 0.6, 0.2, 0.2, 3);
  CHECK(ds.split.train.size() == 6);
  CHECK(ds.split.val.size() == 2);
  CHECK(ds.split.test.size() == 2);
  std::set<std::size_t> all(ds.split.train.begin(), ds.split.train.end());
  all.insert(ds.split.val.begin(), ds.split.val.end());
  all.insert(ds.split.test.begin(), ds.split.test.end());
  CHECK(all.size() == 10);

  const GraphDataset again = split_dataset(generate_synthetic(s), 0.6, 0.2, 0.2, 3);
  CHECK(again.split == ds.split);
}

TEST_CASE("split fractions {1,0,0} put everything in train") {
  const GraphDataset ds = split_dataset(generate_synthetic(small_spec()), 1.0, 0.0, 0.0, 0);
  CHECK(mask_indices(ds.graphs[0], Split::train).size() == 60);
  CHECK(mask_indices(ds.graphs[0], Split::test).empty());
}

TEST_CASE("invalid split fractions are rejected") {
  const GraphDataset ds = generate_synthetic(small_spec());
  CHECK_THROWS_AS(split_dataset(ds, 0.5, 0.2, 0.2, 0), ValidationError);
  CHECK_THROWS_AS(split_dataset(ds, 1.2, -0.2, 0.0, 0), ValidationError);
}

TEST_CASE("messages of an undirected graph share one slot per edge") {
  Graph g;
  g.num_nodes = 3;
  g.features = Tensor(3, 1, 1.0);
  g.edges = {{0, 1}, {1, 2}};
  g.edge_weights = {0.5, 1.0};
  const MessageList m = build_messages(g, true);
  CHECK(m.num_slots == 2);
  CHECK(m.messages.size() == 4 + 3);
  std::size_t slot0 = 0;
  for (const auto& msg : m.messages) slot0 += msg.slot == 0;
  CHECK(slot0 == 2);
}

TEST_CASE("select_classes relabels and keeps only chosen classes") {
  SynthTaskSpec s = small_spec();
  s.num_classes = 4;
  s.num_nodes = 80;
  const std::vector<std::int64_t> keep{2, 3};
  const GraphDataset ds = select_classes(generate_synthetic(s), keep, 0);
  const Graph& g = ds.graphs[0];
  CHECK(g.num_nodes == 40);
  CHECK(ds.num_classes == 2u);
  const auto& labels = std::get<std::vector<std::int64_t>>(*g.node_labels);
  CHECK(*std::min_element(labels.begin(), labels.end()) == 0);
  CHECK(*std::max_element(labels.begin(), labels.end()) == 1);
}

}  // TEST_SUITE
