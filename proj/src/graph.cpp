// SPDX-License-Identifier: Apache-2.0
#include "mgt/graph.hpp"

#include <fstream>
#include <sstream>

#include "mgt/error.hpp"

namespace mgt {

Graph::Graph(std::size_t num_nodes, bool directed) : num_nodes_(num_nodes), directed_(directed) {}

std::pair<std::size_t, std::size_t> Graph::key(std::size_t from, std::size_t to) const {
  if (!directed_ && to < from) return {to, from};
  return {from, to};
}

bool Graph::add_edge(std::size_t from, std::size_t to, std::string label) {
  if (from >= num_nodes_ || to >= num_nodes_) {
    throw GraphError("edge (" + std::to_string(from) + ", " + std::to_string(to) +
                     ") out of range for " + std::to_string(num_nodes_) + " nodes");
  }
  auto [it, inserted] = edges_.try_emplace(key(from, to), label);
  if (!inserted && it->second.empty()) it->second = std::move(label);
  return inserted;
}

bool Graph::has_edge(std::size_t from, std::size_t to) const {
  return edges_.contains(key(from, to));
}

std::string Graph::edge_label(std::size_t from, std::size_t to) const {
  auto it = edges_.find(key(from, to));
  return it == edges_.end() ? std::string{} : it->second;
}

std::vector<Edge> Graph::edges() const {
  std::vector<Edge> out;
  out.reserve(edges_.size());
  for (const auto& [k, label] : edges_) out.push_back({k.first, k.second, label});
  return out;
}

void Graph::set_node_labels(std::vector<std::string> labels) {
  if (!labels.empty() && labels.size() != num_nodes_) {
    throw GraphError("expected " + std::to_string(num_nodes_) + " node labels, got " +
                     std::to_string(labels.size()));
  }
  node_labels_ = std::move(labels);
}

Graph Graph::complete(std::size_t n, bool directed) {
  Graph g(n, directed);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g.add_edge(i, j);
  return g;
}

nlohmann::ordered_json graph_to_json(const Graph& g) {
  nlohmann::ordered_json j;
  j["num_nodes"] = g.num_nodes();
  j["directed"] = g.directed();
  auto edges = nlohmann::ordered_json::array();
  for (const auto& e : g.edges()) {
    auto row = nlohmann::ordered_json::array({e.from, e.to});
    if (!e.label.empty()) row.push_back(e.label);
    edges.push_back(std::move(row));
  }
  j["edges"] = std::move(edges);
  j["node_labels"] = g.node_labels();
  return j;
}

Graph graph_from_json(const nlohmann::json& j) {
  try {
    const auto n = j.at("num_nodes").get<long long>();
    if (n < 0) throw GraphError("num_nodes must be non-negative");
    Graph g(static_cast<std::size_t>(n), j.value("directed", false));
    for (const auto& e : j.value("edges", nlohmann::json::array())) {
      if (!e.is_array() || e.size() < 2 || e.size() > 3) {
        throw GraphError("edge entries must be [i, j] or [i, j, label]");
      }
      const auto a = e[0].get<long long>();
      const auto b = e[1].get<long long>();
      if (a < 0 || b < 0) throw GraphError("negative edge endpoint");
      // Repeats (including the reverse of an undirected edge) collapse.
      g.add_edge(static_cast<std::size_t>(a), static_cast<std::size_t>(b),
                 e.size() == 3 ? e[2].get<std::string>() : std::string{});
    }
    if (j.contains("node_labels")) g.set_node_labels(j["node_labels"].get<std::vector<std::string>>());
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw GraphError(std::string("malformed graph JSON: ") + e.what());
  }
}

std::string graph_to_json_string(const Graph& g) { return graph_to_json(g).dump() + "\n"; }

void write_graph_file(const std::filesystem::path& path, const Graph& g) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << graph_to_json_string(g);
}

Graph read_graph_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return graph_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw GraphError(path.string() + ": " + e.what());
  }
}

}  // namespace mgt
