#include "gnnr/graph_io.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <utility>

#include "json_util.hpp"

namespace gnnr {

using detail::json;

namespace {

constexpr int kFormatVersion = 1;

Graph graph_from_object(const json& j) {
  if (!j.is_object()) throw ValidationError("graph: expected a JSON object");
  Graph g;
  g.num_nodes = detail::field<std::size_t>(j, "num_nodes");
  g.directed = detail::field_or<bool>(j, "directed", false);

  const auto rows = detail::field<std::vector<std::vector<double>>>(j, "features");
  if (rows.size() != g.num_nodes) {
    throw ValidationError("features: expected " + std::to_string(g.num_nodes) + " rows, got " +
                          std::to_string(rows.size()));
  }
  const std::size_t dim = rows.empty() ? 0 : rows.front().size();
  std::vector<double> flat;
  flat.reserve(g.num_nodes * dim);
  for (const auto& r : rows) {
    if (r.size() != dim) throw ValidationError("features: rows have different lengths");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  g.features = Tensor(g.num_nodes, dim, std::move(flat));

  const auto raw_edges = detail::field<std::vector<std::vector<std::int64_t>>>(j, "edges");
  std::vector<double> raw_weights(raw_edges.size(), 1.0);
  if (j.contains("edge_weights") && !j["edge_weights"].is_null()) {
    raw_weights = detail::field<std::vector<double>>(j, "edge_weights");
    if (raw_weights.size() != raw_edges.size()) {
      throw ValidationError("edge_weights: length does not match edges");
    }
  }
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> seen;
  for (std::size_t e = 0; e < raw_edges.size(); ++e) {
    const auto& pair = raw_edges[e];
    if (pair.size() != 2) throw ValidationError("edges: each edge must be [source, target]");
    if (pair[0] < 0 || static_cast<std::size_t>(pair[0]) >= g.num_nodes) {
      throw ValidationError("edges: edge source out of range");
    }
    if (pair[1] < 0 || static_cast<std::size_t>(pair[1]) >= g.num_nodes) {
      throw ValidationError("edges: edge target out of range");
    }
    const Edge edge{static_cast<std::uint32_t>(pair[0]), static_cast<std::uint32_t>(pair[1])};
    if (!g.directed) {
      // One logical edge per unordered pair.
      const auto key = std::minmax(edge.source, edge.target);
      if (!seen.emplace(key, g.edges.size()).second) continue;
    }
    g.edges.push_back(edge);
    g.edge_weights.push_back(raw_weights[e]);
  }

  if (j.contains("node_labels") && !j["node_labels"].is_null()) {
    const auto& labels = j["node_labels"];
    if (!labels.is_array()) throw ValidationError("node_labels: expected an array");
    bool all_integer = true;
    for (const auto& v : labels) {
      if (!v.is_number()) throw ValidationError("node_labels: expected numbers");
      all_integer = all_integer && v.is_number_integer();
    }
    if (all_integer) {
      g.node_labels = labels.get<std::vector<std::int64_t>>();
    } else {
      g.node_labels = labels.get<std::vector<double>>();
    }
  }

  if (j.contains("masks") && !j["masks"].is_null()) {
    const auto& m = j["masks"];
    Masks masks{std::vector<bool>(g.num_nodes), std::vector<bool>(g.num_nodes),
                std::vector<bool>(g.num_nodes)};
    const std::pair<const char*, std::vector<bool>*> parts[] = {
        {"train", &masks.train}, {"val", &masks.val}, {"test", &masks.test}};
    for (const auto& [name, target] : parts) {
      for (const auto i : detail::field_or<std::vector<std::int64_t>>(m, name, {})) {
        if (i < 0 || static_cast<std::size_t>(i) >= g.num_nodes) {
          throw ValidationError(std::string("masks.") + name + ": index out of range");
        }
        (*target)[static_cast<std::size_t>(i)] = true;
      }
    }
    g.masks = std::move(masks);
  }
  g.validate();
  return g;
}

json graph_to_object(const Graph& g) {
  json j;
  j["format_version"] = kFormatVersion;
  j["num_nodes"] = g.num_nodes;
  j["directed"] = g.directed;
  json features = json::array();
  for (std::size_t r = 0; r < g.num_nodes; ++r) {
    const auto row = g.features.row(r);
    features.push_back(std::vector<double>(row.begin(), row.end()));
  }
  j["features"] = std::move(features);
  json edges = json::array();
  for (const auto& e : g.edges) edges.push_back({e.source, e.target});
  j["edges"] = std::move(edges);
  j["edge_weights"] = g.edge_weights;
  if (g.node_labels) {
    std::visit([&](const auto& labels) { j["node_labels"] = labels; }, *g.node_labels);
  }
  if (g.masks) {
    json m;
    const std::pair<const char*, const std::vector<bool>*> parts[] = {
        {"train", &g.masks->train}, {"val", &g.masks->val}, {"test", &g.masks->test}};
    for (const auto& [name, source] : parts) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < source->size(); ++i)
        if ((*source)[i]) idx.push_back(i);
      m[name] = idx;
    }
    j["masks"] = std::move(m);
  }
  return j;
}

}  // namespace

Graph graph_from_json(std::string_view text) { return graph_from_object(detail::parse_json(text)); }

std::string graph_to_json(const Graph& g) { return graph_to_object(g).dump(); }

Graph load_graph(const std::filesystem::path& path) { return graph_from_json(read_text_file(path)); }

void save_graph(const Graph& g, const std::filesystem::path& path) {
  write_text_file(path, graph_to_json(g) + "\n");
}

GraphDataset dataset_from_json(std::string_view text) {
  const json j = detail::parse_json(text);
  if (!j.is_object()) throw ValidationError("dataset: expected a JSON object");
  GraphDataset ds;
  ds.task_kind = parse_task_kind(detail::field<std::string>(j, "task_kind"));
  if (j.contains("num_classes") && !j["num_classes"].is_null()) {
    ds.num_classes = detail::field<std::size_t>(j, "num_classes");
  }
  const auto it = j.find("graphs");
  if (it == j.end() || !it->is_array()) throw ValidationError("graphs: expected an array");
  std::vector<double> labels;
  bool any_label = false;
  for (const auto& gj : *it) {
    ds.graphs.push_back(graph_from_object(gj));
    if (gj.contains("graph_label") && !gj["graph_label"].is_null()) {
      labels.push_back(detail::field<double>(gj, "graph_label"));
      any_label = true;
    } else {
      labels.push_back(0.0);
    }
  }
  if (any_label) ds.graph_labels = std::move(labels);
  if (j.contains("split") && !j["split"].is_null()) {
    const auto& s = j["split"];
    ds.split.train = detail::field_or<std::vector<std::size_t>>(s, "train", {});
    ds.split.val = detail::field_or<std::vector<std::size_t>>(s, "val", {});
    ds.split.test = detail::field_or<std::vector<std::size_t>>(s, "test", {});
  }
  ds.validate();
  return ds;
}

std::string dataset_to_json(const GraphDataset& ds) {
  json j;
  j["format_version"] = kFormatVersion;
  j["task_kind"] = std::string(to_string(ds.task_kind));
  j["num_classes"] = ds.num_classes ? json(*ds.num_classes) : json(nullptr);
  json graphs = json::array();
  for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
    json gj = graph_to_object(ds.graphs[i]);
    if (ds.graph_labels) gj["graph_label"] = (*ds.graph_labels)[i];
    graphs.push_back(std::move(gj));
  }
  j["graphs"] = std::move(graphs);
  j["split"] = {{"train", ds.split.train}, {"val", ds.split.val}, {"test", ds.split.test}};
  return j.dump();
}

GraphDataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_json(read_text_file(path));
}

void save_dataset(const GraphDataset& ds, const std::filesystem::path& path) {
  write_text_file(path, dataset_to_json(ds) + "\n");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw RuntimeFailure("failed writing '" + path.string() + "'");
}

}  // namespace gnnr
