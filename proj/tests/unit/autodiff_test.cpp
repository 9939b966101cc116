#include <doctest.h>

#include <array>
#include <cmath>
#include <limits>

#include "gnnr/autodiff.hpp"
#include "gnnr/errors.hpp"
#include "gnnr/grad_check.hpp"
#include "gnnr/loss.hpp"
#include "gnnr/model.hpp"
#include "support.hpp"

using namespace gnnr;

namespace {

MessageList chain_messages(std::size_t n, std::initializer_list<Message> msgs, std::size_t slots) {
  MessageList m;
  m.num_nodes = n;
  m.num_slots = slots;
  m.messages = msgs;
  return m;
}

double weight_of(const Message& m, const Tensor& w) {
  return m.slot == Message::kUnitWeight ? 1.0 : w[static_cast<std::size_t>(m.slot)];
}

// Per-node loop over incoming messages.
Tensor naive_aggregate(const Tensor& x, const MessageList& ml, const Tensor& w, Aggregator mode) {
  const std::size_t d = x.cols();
  Tensor out(ml.num_nodes, d);
  for (std::size_t v = 0; v < ml.num_nodes; ++v) {
    double wsum = 0.0;
    std::vector<double> acc(d, 0.0);
    std::vector<double> best(d, -std::numeric_limits<double>::infinity());
    bool any = false;
    for (const auto& m : ml.messages) {
      if (m.target != v) continue;
      const double wm = weight_of(m, w);
      wsum += wm;
      for (std::size_t c = 0; c < d; ++c) acc[c] += wm * x(m.source, c);
      if (wm != 0.0) {
        any = true;
        for (std::size_t c = 0; c < d; ++c) best[c] = std::max(best[c], wm * x(m.source, c));
      }
    }
    for (std::size_t c = 0; c < d; ++c) {
      if (mode == Aggregator::sum) out(v, c) = acc[c];
      if (mode == Aggregator::mean) out(v, c) = wsum == 0.0 ? 0.0 : acc[c] / wsum;
      if (mode == Aggregator::max) out(v, c) = any ? best[c] : 0.0;
    }
  }
  return out;
}

void check_gradient(const ScalarFunction& f, const Tensor& point, double tol = 1e-6) {
  const auto report = grad_check(f, point, 1e-5, tol);
  INFO("max rel error " << report.max_rel_error << " at " << report.worst_index);
  CHECK(report.passed);
}

}  // namespace

TEST_SUITE("diff-engine") {

TEST_CASE("single-neighbor mean copies the neighbor") {
  Tape tape;
  const Var x = tape.constant(Tensor{{2, 4}, {0, 0}});
  const Var w = tape.constant(Tensor::row_vector({1.0}));
  const auto ml = chain_messages(2, {{0, 1, 0}}, 1);
  const Tensor out = weighted_neighbor_aggregate(x, ml, w, Aggregator::mean).value();
  CHECK(out(1, 0) == 2.0);
  CHECK(out(1, 1) == 4.0);
}

TEST_CASE("sum scales by the edge weight") {
  Tape tape;
  const Var x = tape.constant(Tensor{{2, 4}, {0, 0}});
  const Var w = tape.constant(Tensor::row_vector({0.5}));
  const auto ml = chain_messages(2, {{0, 1, 0}}, 1);
  const Tensor out = weighted_neighbor_aggregate(x, ml, w, Aggregator::sum).value();
  CHECK(out(1, 0) == 1.0);
  CHECK(out(1, 1) == 2.0);
}

TEST_CASE("isolated node under mean aggregation is zero") {
  Tape tape;
  const Var x = tape.parameter(Tensor{{1, 2}, {3, 4}});
  const Var w = tape.parameter(Tensor::row_vector({0.0}));
  const auto ml = chain_messages(2, {{0, 1, 0}}, 1);
  const Var out = weighted_neighbor_aggregate(x, ml, w, Aggregator::mean);
  CHECK(out.value() == Tensor(2, 2, 0.0));
  tape.backward(sum(out));
  CHECK(tape.grad(x).all_finite());
}

TEST_CASE("aggregation matches a per-node loop on random graphs") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Graph g = test::random_graph(5, 3, 0.5, rng, 2, trial % 2 == 0);
    g.edge_weights[0] = 0.0;
    const MessageList ml = build_messages(g, trial % 3 == 0);
    for (auto mode : {Aggregator::sum, Aggregator::mean, Aggregator::max}) {
      Tape tape;
      const Tensor w = Tensor::row_vector(g.edge_weights);
      const Tensor got = weighted_neighbor_aggregate(tape.constant(g.features), ml, tape.constant(w), mode).value();
      CHECK(max_abs_difference(got, naive_aggregate(g.features, ml, w, mode)) < 1e-14);
    }
  }
}

TEST_CASE("attention coefficients are a weighted softmax over incoming messages") {
  SplitMix64 rng(5);
  const Graph g = test::random_graph(5, 2, 0.6, rng);
  const MessageList ml = build_messages(g, true);
  const Tensor a = test::random_tensor(1, 4, rng);
  Tape tape;
  const Var ones = tape.constant(Tensor(5, 2, 1.0));
  const Tensor out = attention_aggregate(ones, ml, tape.constant(Tensor::row_vector(g.edge_weights)),
                                         tape.constant(a)).value();
  // A constant input reproduces itself when coefficients sum to one.
  for (double v : out.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("backward of sum is all ones") {
  Tape tape;
  const Var x = tape.parameter(Tensor::row_vector({3, -1, 2}));
  tape.backward(sum(x));
  CHECK(tape.grad(x) == Tensor::row_vector({1, 1, 1}));
}

TEST_CASE("relu subgradient is zero on the negative side") {
  Tape tape;
  const Var x = tape.parameter(Tensor::row_vector({-1, 2}));
  tape.backward(sum(relu(x)));
  CHECK(tape.grad(x) == Tensor::row_vector({0, 1}));
}

TEST_CASE("backward on a non-scalar throws") {
  Tape tape;
  const Var x = tape.parameter(Tensor::row_vector({1, 2}));
  CHECK_THROWS_AS(tape.backward(x), ShapeError);
}

TEST_CASE("shape mismatch names both shapes") {
  Tape tape;
  const Var a = tape.constant(Tensor(2, 3));
  const Var b = tape.constant(Tensor(3, 2));
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("2x3"), ShapeError);
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("3x2"), ShapeError);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("gradients accumulate when a value is reused") {
  Tape tape;
  const Var x = tape.parameter(Tensor::row_vector({2}));
  tape.backward(sum(add(mul(x, x), x)));
  CHECK(tape.grad(x)[0] == 5.0);
}

TEST_CASE("grad_check on x*x at 3") {
  const auto report = grad_check([](Tape&, const Var& x) { return sum(mul(x, x)); },
                                 Tensor::scalar(3.0), 1e-5, 1e-6);
  CHECK(report.analytic[0] == 6.0);
  CHECK(std::abs(report.numeric[0] - 6.0) < 1e-6);
  CHECK(report.passed);
}

TEST_CASE("grad_check of a constant function is zero on both sides") {
  const auto report = grad_check([](Tape& t, const Var&) { return t.constant(Tensor::scalar(4.0)); },
                                 Tensor::row_vector({1, 2, 3}), 1e-5, 1e-6);
  CHECK(report.analytic == Tensor(1, 3, 0.0));
  CHECK(report.numeric == Tensor(1, 3, 0.0));
  CHECK(report.passed);
}

TEST_CASE("grad_check flags a wrong gradient") {
  // straight_through reports the soft gradient for a hard value, so the
  // finite difference of the value disagrees.
  const auto report = grad_check(
      [](Tape&, const Var& x) { return sum(straight_through(square(x), Tensor::scalar(1.0))); },
      Tensor::scalar(2.0), 1e-5, 1e-6);
  CHECK_FALSE(report.passed);
}

TEST_CASE("elementwise and structural ops match finite differences") {
  SplitMix64 rng(3);
  const Tensor p = test::random_tensor(3, 4, rng);
  const Tensor other = test::random_tensor(3, 4, rng);
  const Tensor w = test::random_tensor(4, 2, rng);
  const Tensor bias = test::random_tensor(1, 4, rng);
  const std::array<std::size_t, 4> perm{2, 0, 3, 1};
  const std::array<std::size_t, 3> rows{2, 0, 2};
  const std::array<std::size_t, 2> sel_r{0, 2};
  const std::array<std::size_t, 2> sel_c{3, 1};

  auto with = [&](auto body) {
    return [&, body](Tape& t, const Var& x) { return sum(square(body(t, x))); };
  };
  check_gradient(with([&](Tape& t, const Var& x) { return matmul(x, t.constant(w)); }), p);
  check_gradient(with([&](Tape& t, const Var& x) { return add(x, t.constant(other)); }), p);
  check_gradient(with([&](Tape& t, const Var& x) { return sub(t.constant(other), x); }), p);
  check_gradient(with([&](Tape& t, const Var& x) { return mul(x, t.constant(other)); }), p);
  check_gradient(with([&](Tape&, const Var& x) { return scale(x, -2.5); }), p);
  check_gradient(with([&](Tape& t, const Var& x) { return add_row(x, t.constant(bias)); }), p);
  check_gradient(with([&](Tape&, const Var& x) { return relu(x); }), p);
  check_gradient(with([&](Tape&, const Var& x) { return leaky_relu(x, 0.2); }), p);
  check_gradient(with([&](Tape&, const Var& x) { return abs(x); }), p);
  check_gradient(with([&](Tape&, const Var& x) { return mean_rows(x); }), p);
  check_gradient(with([&](Tape&, const Var& x) { return softmax_rows(x); }), p);
  check_gradient(with([&](Tape&, const Var& x) { return log_softmax_rows(x); }), p);
  check_gradient(with([&](Tape& t, const Var& x) { return concat_cols(x, t.constant(other)); }), p);
  check_gradient(with([&](Tape& t, const Var& x) { return concat_rows(t.constant(other), x); }), p);
  check_gradient(with([&](Tape&, const Var& x) { return permute_cols(x, perm); }), p);
  check_gradient(with([&](Tape&, const Var& x) { return gather_rows(x, rows); }), p);
  check_gradient(with([&](Tape&, const Var& x) { return slice_cols(x, 1, 2); }), p);
  check_gradient(with([&](Tape&, const Var& x) { return select_entries(x, sel_r, sel_c); }), p);
  check_gradient(with([&](Tape&, const Var& x) { return broadcast_rows(mean_rows(x), 3); }), p);
  check_gradient([&](Tape&, const Var& x) { return mean(square(x)); }, p);
}

TEST_CASE("mix matches finite differences in parts and weights") {
  SplitMix64 rng(4);
  const Tensor a = test::random_tensor(2, 3, rng);
  const Tensor b = test::random_tensor(2, 3, rng);
  check_gradient([&](Tape& t, const Var& wts) {
    const std::array parts{t.constant(a), t.constant(b)};
    return sum(square(mix(parts, wts)));
  }, Tensor::row_vector({0.3, 0.7}));
  check_gradient([&](Tape& t, const Var& x) {
    const std::array parts{x, t.constant(b)};
    return sum(square(mix(parts, t.constant(Tensor::row_vector({0.3, 0.7})))));
  }, a);
}

TEST_CASE("aggregation gradients match finite differences") {
  SplitMix64 rng(9);
  const Graph g = test::random_graph(6, 3, 0.5, rng);
  const MessageList ml = build_messages(g, true);
  const Tensor w = Tensor::row_vector(g.edge_weights);
  const Tensor att = test::random_tensor(1, 6, rng);
  for (auto mode : {Aggregator::sum, Aggregator::mean, Aggregator::max}) {
    CAPTURE(to_string(mode));
    check_gradient([&](Tape& t, const Var& x) {
      return sum(square(weighted_neighbor_aggregate(x, ml, t.constant(w), mode)));
    }, g.features);
    check_gradient([&](Tape& t, const Var& wv) {
      return sum(square(weighted_neighbor_aggregate(t.constant(g.features), ml, wv, mode)));
    }, w);
  }
  check_gradient([&](Tape& t, const Var& x) {
    return sum(square(attention_aggregate(x, ml, t.constant(w), t.constant(att))));
  }, g.features);
  check_gradient([&](Tape& t, const Var& wv) {
    return sum(square(attention_aggregate(t.constant(g.features), ml, wv, t.constant(att))));
  }, w);
  check_gradient([&](Tape& t, const Var& av) {
    return sum(square(attention_aggregate(t.constant(g.features), ml, t.constant(w), av)));
  }, att);
}

TEST_CASE("full GCN loss passes grad_check in the edge weights") {
  SplitMix64 rng(21);
  const Graph g = test::random_graph(8, 4, 0.4, rng, 3);
  Architecture arch;
  arch.in_dim = 4;
  arch.hidden_dim = 6;
  arch.out_dim = 3;
  const ModelParams params = init_params(arch, 2);
  const MessageList ml = build_messages(g, true);
  const Targets targets = node_targets(g, Split::train);
  const LossSpec loss;
  check_gradient([&](Tape& t, const Var& wv) {
    const BoundModel bm = bind(t, params, false);
    const Var out = forward(bm, t.constant(g.features), ml, wv, AggregationPlan::single(Aggregator::mean));
    return loss_on_rows(out, targets, loss);
  }, Tensor::row_vector(g.edge_weights), 1e-5);
}

TEST_CASE("random two-layer network gradients match central differences") {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = test::random_tensor(4, 3, rng);
    const Tensor w1 = test::random_tensor(3, 5, rng);
    const Tensor w2 = test::random_tensor(5, 2, rng);
    check_gradient([&](Tape& t, const Var& xv) {
      return sum(log_softmax_rows(matmul(relu(matmul(xv, t.constant(w1))), t.constant(w2))));
    }, x, 1e-5);
  }
}

}  // TEST_SUITE
