#include "gnnr/meta_graph.hpp"

#include "gnnr/errors.hpp"
#include "gnnr/program.hpp"
#include "gnnr/rng.hpp"
#include "gnnr/training.hpp"
#include "json_util.hpp"

namespace gnnr {

using detail::json;

MetaGraph make_meta_graph(std::size_t num_meta_nodes, std::size_t feat_dim, std::uint64_t seed,
                          double init_std) {
  MetaGraph meta{Tensor(num_meta_nodes, feat_dim)};
  auto rng = substream(seed, "meta");
  for (auto& v : meta.features.data()) v = init_std * rng.normal();
  return meta;
}

Graph attach_meta_graph(const Graph& g, const MetaGraph& meta) {
  const std::size_t m = meta.num_meta_nodes();
  if (m == 0) return g;
  if (meta.feat_dim() != g.feat_dim()) {
    throw ShapeError("attach_meta_graph: meta feat_dim=" + std::to_string(meta.feat_dim()) +
                     " but graph feat_dim=" + std::to_string(g.feat_dim()));
  }
  const std::size_t n = g.num_nodes;
  Graph out;
  out.num_nodes = n + m;
  out.directed = g.directed;
  out.features = Tensor(n + m, g.feat_dim());
  std::copy(g.features.data().begin(), g.features.data().end(), out.features.data().begin());
  std::copy(meta.features.data().begin(), meta.features.data().end(),
            out.features.data().begin() + static_cast<std::ptrdiff_t>(n * g.feat_dim()));
  out.edges = g.edges;
  out.edge_weights = g.edge_weights;
  for (std::size_t i = 0; i < m; ++i) {
    const auto meta_id = static_cast<std::uint32_t>(n + i);
    for (std::size_t v = 0; v < n; ++v) {
      const auto node = static_cast<std::uint32_t>(v);
      out.edges.push_back({meta_id, node});
      out.edge_weights.push_back(1.0);
      if (g.directed) {
        out.edges.push_back({node, meta_id});
        out.edge_weights.push_back(1.0);
      }
    }
  }
  if (g.node_labels) {
    out.node_labels = std::visit(
        [&](auto labels) -> NodeLabels {
          labels.resize(n + m);
          return labels;
        },
        *g.node_labels);
  }
  if (g.masks) {
    Masks masks = *g.masks;
    masks.train.resize(n + m, false);
    masks.val.resize(n + m, false);
    masks.test.resize(n + m, false);
    out.masks = std::move(masks);
  }
  return out;
}

bool preserves_original(const Graph& original, const Graph& augmented) {
  const std::size_t n = original.num_nodes;
  if (augmented.num_nodes < n || augmented.feat_dim() != original.feat_dim()) return false;
  if (augmented.directed != original.directed) return false;
  const auto& a = augmented.features.data();
  if (!std::equal(original.features.data().begin(), original.features.data().end(), a.begin())) return false;

  std::vector<Edge> induced;
  std::vector<double> weights;
  for (std::size_t e = 0; e < augmented.edges.size(); ++e) {
    const Edge& edge = augmented.edges[e];
    if (edge.source < n && edge.target < n) {
      induced.push_back(edge);
      weights.push_back(augmented.edge_weights[e]);
    }
  }
  if (induced != original.edges || weights != original.edge_weights) return false;

  if (original.node_labels.has_value() != augmented.node_labels.has_value()) return false;
  if (original.node_labels) {
    const bool same = std::visit(
        [&](const auto& orig) {
          using T = std::decay_t<decltype(orig)>;
          const auto* aug = std::get_if<T>(&*augmented.node_labels);
          return aug != nullptr && std::equal(orig.begin(), orig.end(), aug->begin());
        },
        *original.node_labels);
    if (!same) return false;
  }
  if (original.masks.has_value() != augmented.masks.has_value()) return false;
  if (original.masks) {
    const std::vector<bool>* parts[][2] = {{&original.masks->train, &augmented.masks->train},
                                            {&original.masks->val, &augmented.masks->val},
                                            {&original.masks->test, &augmented.masks->test}};
    for (const auto& [o, aug] : parts) {
      for (std::size_t i = 0; i < aug->size(); ++i) {
        if ((*aug)[i] != (i < n ? (*o)[i] : false)) return false;
      }
    }
  }
  return true;
}

MetaGraphResult optimize_meta_features(const FrozenModel& model, const GraphDataset& ds,
                                       const MetaGraph& meta, const LossSpec& loss,
                                       const ReprogramOptions& opt) {
  const HashGuard guard(model, "optimize_meta_features");
  if (!ds.graph_level()) {
    throw ValidationError("optimize_meta_features: meta-graph padding needs an inductive graph-level task; "
                          "use edge slimming or feature padding for transductive tasks");
  }
  if (meta.feat_dim() != ds.feat_dim()) {
    throw ShapeError("optimize_meta_features: meta feat_dim=" + std::to_string(meta.feat_dim()) +
                     " but dataset feat_dim=" + std::to_string(ds.feat_dim()));
  }
  require_input_dim(model.params(), ds.feat_dim());

  std::vector<PreparedGraph> prepared;
  for (const auto& g : ds.graphs) prepared.push_back(prepare_graph(g, model.params(), meta.num_meta_nodes()));

  MetaGraphResult result;
  result.meta = meta;
  result.losses = descend(result.meta.features, opt, "optimize_meta_features", [&](Tape& tape, const Var& f) {
    const BoundModel bound = bind(tape, model.params(), false);
    TapeProgram program;
    program.meta_features = f;
    return dataset_loss(tape, ds, Split::train, loss, [&](Tape& t, std::size_t i) {
      return program_forward(t, bound, prepared[i], program);
    });
  });
  guard.verify();
  return result;
}

Tensor infer_with_meta_graph(const FrozenModel& model, const Graph& g, const MetaGraph& meta) {
  Reprogramming r;
  r.meta = &meta;
  return reprogrammed_forward(model, g, r);
}

std::string meta_graph_to_json(const MetaGraph& meta) {
  const json j{{"num_meta_nodes", meta.num_meta_nodes()},
               {"feat_dim", meta.feat_dim()},
               {"features", detail::tensor_to_json(meta.features)}};
  return j.dump();
}

MetaGraph meta_graph_from_json(std::string_view text) {
  const json j = detail::parse_json(text);
  MetaGraph meta{detail::tensor_from_json(j.at("features"), "features")};
  if (meta.num_meta_nodes() != detail::field<std::size_t>(j, "num_meta_nodes")) {
    throw ValidationError("num_meta_nodes: does not match features");
  }
  if (!meta.features.all_finite()) throw ValidationError("features: contains NaN or Inf");
  return meta;
}

}  // namespace gnnr
