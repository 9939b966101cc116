#include "gnnr/edge_slim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gnnr/errors.hpp"
#include "gnnr/program.hpp"
#include "json_util.hpp"

namespace gnnr {

namespace {

struct GradientPass {
  double loss = 0.0;
  std::vector<double> gradients;
};

GradientPass gradient_pass(const FrozenModel& model, const Graph& g, const LossSpec& loss) {
  require_input_dim(model.params(), g.feat_dim());
  if (!g.masks) throw ValidationError("edge_gradients: graph has no train mask");
  Tape tape;
  const BoundModel bound = bind(tape, model.params(), false);
  const PreparedGraph prepared = prepare_graph(g, model.params());
  TapeProgram program;
  program.edge_weights = tape.parameter(prepared.edge_weights);
  const Var out = program_forward(tape, bound, prepared, program);
  const Var l = loss_on_rows(out, node_targets(g, Split::train), loss);
  GradientPass pass;
  pass.loss = l.value().item();
  if (!std::isfinite(pass.loss)) throw NumericError("edge_gradients: non-finite loss");
  tape.backward(l);
  pass.gradients = tape.grad(program.edge_weights).data();
  return pass;
}

}  // namespace

std::vector<double> edge_gradients(const FrozenModel& model, const Graph& g, const LossSpec& loss) {
  const HashGuard guard(model, "edge_gradients");
  auto grads = gradient_pass(model, g, loss).gradients;
  guard.verify();
  return grads;
}

std::vector<double> edge_gradients(const FrozenModel& model, const GraphDataset& ds, const LossSpec& loss) {
  if (ds.graph_level()) {
    throw ValidationError("edge_gradients: edge slimming applies to transductive node-level tasks only; "
                          "use meta-graph padding for inductive graph-level tasks");
  }
  return edge_gradients(model, ds.graphs.front(), loss);
}

SlimResult slim_edges(const FrozenModel& model, const Graph& g, const LossSpec& loss,
                      const SlimOptions& options) {
  const HashGuard guard(model, "slim_edges");
  if (options.recompute_every == 0) throw ValidationError("slim_edges: recompute_every must be >= 1");

  SlimResult result{g, {}};
  result.plan.recompute_every = options.recompute_every;
  result.plan.max_deletions = options.max_deletions;
  Graph& current = result.graph;
  std::vector<std::size_t> original_id(current.num_edges());
  std::iota(original_id.begin(), original_id.end(), 0);

  for (std::size_t iteration = 0;; ++iteration) {
    const GradientPass pass = gradient_pass(model, current, loss);
    SlimIteration log{iteration, current.num_edges(), pass.loss, 0.0, 0};
    std::vector<std::size_t> positive;
    for (std::size_t e = 0; e < pass.gradients.size(); ++e) {
      log.abs_gradient_sum += std::abs(pass.gradients[e]);
      if (pass.gradients[e] > 0.0) positive.push_back(e);
    }
    log.positive = positive.size();
    result.plan.iterations.push_back(log);

    std::size_t budget = options.recompute_every;
    if (options.max_deletions) {
      budget = std::min(budget, *options.max_deletions - result.plan.steps.size());
    }
    if (positive.empty() || budget == 0) break;
    std::stable_sort(positive.begin(), positive.end(), [&](std::size_t a, std::size_t b) {
      return pass.gradients[a] > pass.gradients[b];
    });
    positive.resize(std::min(budget, positive.size()));

    std::vector<bool> drop(current.num_edges(), false);
    for (const auto e : positive) {
      drop[e] = true;
      result.plan.steps.push_back(
          {original_id[e], current.edges[e].source, current.edges[e].target, pass.gradients[e], iteration});
    }
    Graph next = current;
    next.edges.clear();
    next.edge_weights.clear();
    std::vector<std::size_t> next_ids;
    for (std::size_t e = 0; e < current.num_edges(); ++e) {
      if (drop[e]) continue;
      next.edges.push_back(current.edges[e]);
      next.edge_weights.push_back(current.edge_weights[e]);
      next_ids.push_back(original_id[e]);
    }
    current = std::move(next);
    original_id = std::move(next_ids);
  }
  guard.verify();
  return result;
}

std::string slim_plan_csv(const SlimPlan& plan) {
  std::ostringstream out;
  out << "edge_id,source,target,gradient,iteration\n";
  for (const auto& s : plan.steps) {
    out << s.edge_id << ',' << s.source << ',' << s.target << ',' << detail::format_double(s.gradient) << ','
        << s.iteration << '\n';
  }
  return out.str();
}

}  // namespace gnnr
