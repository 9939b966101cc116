#include "gnnr/synth.hpp"

#include <string>

#include "gnnr/errors.hpp"
#include "gnnr/rng.hpp"

namespace gnnr {

std::string_view to_string(ClassSignal s) noexcept {
  return s == ClassSignal::one_hot ? "one-hot" : "level";
}

ClassSignal parse_class_signal(std::string_view name) {
  if (name == "one-hot") return ClassSignal::one_hot;
  if (name == "level") return ClassSignal::level;
  throw ValidationError("unknown class_signal '" + std::string(name) + "'");
}

void SynthTaskSpec::validate() const {
  if (!(inter_p >= 0.0 && inter_p < intra_p && intra_p <= 1.0)) {
    throw ValidationError("synth: need 0 <= inter_p < intra_p <= 1");
  }
  if (feat_dim < 1) throw ValidationError("synth: feat_dim must be >= 1");
  if (num_classes < 1) throw ValidationError("synth: num_classes must be >= 1");
  if (num_nodes < 1) throw ValidationError("synth: num_nodes must be >= 1");
  if (is_graph_level(task_kind) && num_graphs < 1) {
    throw ValidationError("synth: num_graphs must be >= 1 for graph-level tasks");
  }
  if (!(noise_std >= 0.0)) throw ValidationError("synth: noise_std must be >= 0");
}

Tensor class_mean(const SynthTaskSpec& spec, std::size_t cls) {
  Tensor mean(1, spec.feat_dim, spec.feature_shift);
  if (spec.class_signal == ClassSignal::one_hot) {
    mean[cls % spec.feat_dim] += spec.signal_scale;
  } else {
    for (auto& v : mean.data()) v += spec.signal_scale * static_cast<double>(cls);
  }
  return mean;
}

namespace {

void fill_features(Tensor& features, std::size_t row, const Tensor& mean, double noise_std,
                   SplitMix64& rng) {
  auto out = features.row(row);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = mean[c] + noise_std * rng.normal();
}

}  // namespace

GraphDataset generate_synthetic(const SynthTaskSpec& spec) {
  spec.validate();
  auto feature_rng = substream(spec.seed, "synth/features");
  auto edge_rng = substream(spec.seed, "synth/edges");
  const std::size_t n = spec.num_nodes;
  const std::size_t k = spec.num_classes;

  std::vector<Tensor> means;
  for (std::size_t c = 0; c < k; ++c) means.push_back(class_mean(spec, c));

  GraphDataset ds;
  ds.task_kind = spec.task_kind;
  if (is_classification(spec.task_kind)) ds.num_classes = k;

  if (!is_graph_level(spec.task_kind)) {
    Graph g;
    g.num_nodes = n;
    g.features = Tensor(n, spec.feat_dim);
    std::vector<std::size_t> block(n);
    for (std::size_t v = 0; v < n; ++v) {
      block[v] = v * k / n;
      fill_features(g.features, v, means[block[v]], spec.noise_std, feature_rng);
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double p = block[i] == block[j] ? spec.intra_p : spec.inter_p;
        if (edge_rng.bernoulli(p)) {
          g.edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
          g.edge_weights.push_back(1.0);
        }
      }
    }
    if (spec.task_kind == TaskKind::node_classification) {
      g.node_labels = std::vector<std::int64_t>(block.begin(), block.end());
    } else {
      g.node_labels = std::vector<double>(block.begin(), block.end());
    }
    ds.graphs.push_back(std::move(g));
    return split_dataset(ds, 0.6, 0.2, 0.2, spec.seed);
  }

  std::vector<double> labels;
  for (std::size_t i = 0; i < spec.num_graphs; ++i) {
    const std::size_t cls = i % k;
    Graph g;
    g.num_nodes = n;
    g.features = Tensor(n, spec.feat_dim);
    for (std::size_t v = 0; v < n; ++v) fill_features(g.features, v, means[cls], spec.noise_std, feature_rng);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (edge_rng.bernoulli(spec.intra_p)) {
          g.edges.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)});
          g.edge_weights.push_back(1.0);
        }
      }
    }
    labels.push_back(static_cast<double>(cls));
    ds.graphs.push_back(std::move(g));
  }
  ds.graph_labels = std::move(labels);
  return split_dataset(ds, 0.6, 0.2, 0.2, spec.seed);
}

}  // namespace gnnr
