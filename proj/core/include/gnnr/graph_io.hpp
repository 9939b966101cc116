#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "gnnr/graph.hpp"

namespace gnnr {

/// Graph JSON (format_version 1):
///   num_nodes, directed, features, edges, [edge_weights], [node_labels],
///   [masks {train, val, test} as index lists], [graph_label]
///
/// Undirected input may list an edge once or as a symmetric pair; both forms
/// load as one logical edge. Errors: ParseError (with byte offset) for
/// malformed JSON, ValidationError naming the field otherwise.
Graph graph_from_json(std::string_view text);
std::string graph_to_json(const Graph& g);

Graph load_graph(const std::filesystem::path& path);
void save_graph(const Graph& g, const std::filesystem::path& path);

/// Dataset JSON: {"format_version", "task_kind", "num_classes", "graphs",
/// "split": {train, val, test}}. Graph-level labels live in each graph
/// object's "graph_label".
GraphDataset dataset_from_json(std::string_view text);
std::string dataset_to_json(const GraphDataset& ds);

GraphDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const GraphDataset& ds, const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace gnnr
