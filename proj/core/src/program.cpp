#include "gnnr/program.hpp"

#include <algorithm>
#include <cmath>

#include "gnnr/errors.hpp"
#include "gnnr/training.hpp"

namespace gnnr {

PreparedGraph prepare_graph(const Graph& g, const ModelParams& params, std::size_t num_meta_nodes) {
  PreparedGraph p;
  p.features = g.features;
  p.num_meta_nodes = num_meta_nodes;
  if (num_meta_nodes == 0) {
    p.messages = build_messages(g, params.self_loops);
    p.edge_weights = Tensor::row_vector(g.edge_weights);
    return p;
  }
  MetaGraph placeholder{Tensor(num_meta_nodes, g.feat_dim())};
  const Graph augmented = attach_meta_graph(g, placeholder);
  p.messages = build_messages(augmented, params.self_loops);
  p.edge_weights = Tensor::row_vector(augmented.edge_weights);
  return p;
}

Var program_forward(Tape& tape, const BoundModel& model, const PreparedGraph& graph,
                    const TapeProgram& program) {
  const std::size_t n = graph.features.rows();
  Var x = tape.constant(graph.features);
  if (program.perturbation.valid()) x = add(x, broadcast_rows(program.perturbation, n));
  if (program.padding != nullptr && program.padding->pad_size > 0) {
    if (x.shape().cols != program.padding->raw_dim) {
      throw ShapeError("padding: expects raw_dim=" + std::to_string(program.padding->raw_dim) +
                       " features, got " + std::to_string(x.shape().cols));
    }
    const auto layout = program.padding->layout();
    x = permute_cols(concat_cols(x, broadcast_rows(program.delta, n)), layout);
  }
  if (graph.num_meta_nodes > 0) {
    if (!program.meta_features.valid() || program.meta_features.shape().rows != graph.num_meta_nodes) {
      throw ValidationError("program: graph prepared for " + std::to_string(graph.num_meta_nodes) +
                            " meta nodes but no matching meta features were given");
    }
    x = concat_rows(x, program.meta_features);
  }
  const Var w = program.edge_weights.valid() ? program.edge_weights : tape.constant(graph.edge_weights);
  const AggregationPlan plan = program.plan.candidates.empty()
                                   ? AggregationPlan::single(model.params->aggregator)
                                   : program.plan;
  return forward(model, x, graph.messages, w, plan);
}

Tensor reprogrammed_forward(const FrozenModel& model, const Graph& g, const Reprogramming& r) {
  Tape tape;
  const BoundModel bound = bind(tape, model.params(), false);
  const std::size_t meta_nodes = r.meta != nullptr ? r.meta->num_meta_nodes() : 0;
  const PreparedGraph prepared = prepare_graph(g, model.params(), meta_nodes);
  TapeProgram program;
  if (r.padding != nullptr) {
    program.padding = r.padding;
    program.delta = tape.constant(r.padding->delta);
  }
  if (r.perturbation != nullptr) program.perturbation = tape.constant(*r.perturbation);
  if (meta_nodes > 0) program.meta_features = tape.constant(r.meta->features);
  if (r.aggregator) program.plan = AggregationPlan::single(*r.aggregator);
  return program_forward(tape, bound, prepared, program).value();
}

namespace {

struct Evaluation {
  double loss = 0.0;
  std::vector<double> grad;
};

Evaluation evaluate_objective(const Tensor& value, std::string_view where, std::size_t epoch,
                              const Objective& objective) {
  Tape tape;
  const Var artifact = tape.parameter(value);
  const Var loss = objective(tape, artifact);
  Evaluation e;
  e.loss = loss.value().item();
  require_finite_loss(e.loss, where, epoch);
  tape.backward(loss);
  e.grad = tape.grad(artifact).data();
  return e;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Cholesky solve of (H + lambda I) x = b; false if not positive definite.
bool damped_solve(const std::vector<double>& h, std::size_t n, double lambda, const std::vector<double>& b,
                  std::vector<double>& x) {
  std::vector<double> l(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = h[i * n + j] + (i == j ? lambda : 0.0);
      for (std::size_t k = 0; k < j; ++k) sum -= l[i * n + k] * l[j * n + k];
      if (i == j) {
        if (!(sum > 0.0)) return false;
        l[i * n + i] = std::sqrt(sum);
      } else {
        l[i * n + j] = sum / l[j * n + j];
      }
    }
  }
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = b[i];
    for (std::size_t k = 0; k < i; ++k) sum -= l[i * n + k] * y[k];
    y[i] = sum / l[i * n + i];
  }
  x.assign(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double sum = y[i];
    for (std::size_t k = i + 1; k < n; ++k) sum -= l[k * n + i] * x[k];
    x[i] = sum / l[i * n + i];
  }
  return true;
}

// Damped Newton with Armijo backtracking. The Hessian comes from central
// differences of the exact gradient, so the cost per epoch is 2n + 1 gradient
// evaluations; meant for small artifacts such as a padding vector. lr scales
// the Newton step.
std::vector<double> descend_newton(Tensor& value, const ReprogramOptions& opt, std::string_view where,
                                   const Objective& objective) {
  const std::size_t n = value.size();
  Evaluation cur = evaluate_objective(value, where, 0, objective);
  std::vector<double> losses{cur.loss};
  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::vector<double> h(n * n);
    for (std::size_t j = 0; j < n; ++j) {
      const double step = 1e-5 * std::max(1.0, std::abs(value[j]));
      Tensor probe = value;
      probe[j] = value[j] + step;
      const auto gp = evaluate_objective(probe, where, epoch, objective).grad;
      probe[j] = value[j] - step;
      const auto gm = evaluate_objective(probe, where, epoch, objective).grad;
      for (std::size_t i = 0; i < n; ++i) h[i * n + j] = (gp[i] - gm[i]) / (2 * step);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) h[i * n + j] = h[j * n + i] = 0.5 * (h[i * n + j] + h[j * n + i]);
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(h[i * n + i]));
    std::vector<double> d;
    double lambda = 0.0;
    while (!damped_solve(h, n, lambda, cur.grad, d)) lambda = lambda == 0.0 ? 1e-6 * std::max(scale, 1e-12) : lambda * 10;
    for (auto& v : d) v *= opt.lr;
    const double slope = -dot(cur.grad, d);
    if (!(slope < 0.0)) break;
    const Tensor start = value;
    double t = 1.0;
    bool accepted = false;
    Evaluation next;
    for (int b = 0; b < 30; ++b, t *= 0.5) {
      for (std::size_t k = 0; k < n; ++k) value[k] = start[k] - t * d[k];
      Tape probe;
      const Var artifact = probe.parameter(value);
      const double trial = objective(probe, artifact).value().item();
      if (std::isfinite(trial) && trial <= cur.loss + 1e-4 * t * slope) {
        next = evaluate_objective(value, where, epoch, objective);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      value = start;
      break;
    }
    const double previous = cur.loss;
    cur = std::move(next);
    losses.push_back(cur.loss);
    if (opt.early_stop > 0 &&
        (previous == 0.0 || (previous - cur.loss) / std::abs(previous) < opt.early_stop)) {
      break;
    }
  }
  return losses;
}

}  // namespace

std::vector<double> descend(Tensor& value, const ReprogramOptions& opt, std::string_view where,
                            const Objective& objective) {
  if (opt.rule == StepRule::newton) return descend_newton(value, opt, where, objective);
  std::vector<double> losses;
  Stepper stepper(opt.rule, opt.lr);
  for (std::size_t epoch = 0;; ++epoch) {
    Tape tape;
    const Var artifact = tape.parameter(value);
    const Var loss = objective(tape, artifact);
    const double current = loss.value().item();
    require_finite_loss(current, where, epoch);
    losses.push_back(current);
    if (epoch == opt.epochs) break;
    if (epoch > 0 && opt.early_stop > 0) {
      const double previous = losses[epoch - 1];
      if (previous == 0.0 || (previous - current) / std::abs(previous) < opt.early_stop) break;
    }
    tape.backward(loss);
    stepper.step(0, tape, artifact, value, where);
  }
  return losses;
}

}  // namespace gnnr
