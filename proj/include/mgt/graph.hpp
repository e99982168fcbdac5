// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace mgt {

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  std::string label;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Node/edge graph over sequence positions.
///
/// Undirected graphs store each edge once under (min, max); has_edge() answers
/// for both orientations, so the edge relation is closed under reversal.
/// Duplicates are ignored. A later duplicate may fill in a missing label but
/// never overwrites an existing one.
class Graph {
 public:
  explicit Graph(std::size_t num_nodes = 0, bool directed = false);

  std::size_t num_nodes() const { return num_nodes_; }
  bool directed() const { return directed_; }

  /// Returns false when the edge already existed. Throws GraphError when an
  /// endpoint is out of range.
  bool add_edge(std::size_t from, std::size_t to, std::string label = {});
  bool has_edge(std::size_t from, std::size_t to) const;
  /// Label of an existing edge; empty when unlabeled or absent.
  std::string edge_label(std::size_t from, std::size_t to) const;

  /// Stored edges in ascending (from, to) order.
  std::vector<Edge> edges() const;
  std::size_t edge_count() const { return edges_.size(); }

  const std::vector<std::string>& node_labels() const { return node_labels_; }
  /// Either empty or exactly one label per node.
  void set_node_labels(std::vector<std::string> labels);

  /// All n^2 ordered pairs, self edges included.
  static Graph complete(std::size_t n, bool directed = false);

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  std::pair<std::size_t, std::size_t> key(std::size_t from, std::size_t to) const;

  std::size_t num_nodes_;
  bool directed_;
  std::map<std::pair<std::size_t, std::size_t>, std::string> edges_;
  std::vector<std::string> node_labels_;
};

// {"num_nodes": int, "directed": bool, "edges": [[i, j, "label"?], ...], "node_labels": [...]}
nlohmann::ordered_json graph_to_json(const Graph& g);
Graph graph_from_json(const nlohmann::json& j);
/// Canonical serialization: identical graphs give identical bytes.
std::string graph_to_json_string(const Graph& g);
void write_graph_file(const std::filesystem::path& path, const Graph& g);
Graph read_graph_file(const std::filesystem::path& path);

}  // namespace mgt
