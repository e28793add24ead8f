#include "fieldrec/graph.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace fieldrec {

CommGraph::CommGraph(Index vertex_count, std::vector<Edge> edges)
    : vertex_count_(vertex_count), adjacency_(static_cast<std::size_t>(std::max<Index>(vertex_count, 0))) {
  if (vertex_count < 0) throw std::invalid_argument("graph: negative vertex count");
  for (auto& [u, v] : edges) {
    if (u < 0 || v < 0 || u >= vertex_count || v >= vertex_count)
      throw std::invalid_argument("graph: edge endpoint out of range");
    if (u == v) throw std::invalid_argument("graph: self-loop at vertex " + std::to_string(u + 1));
    if (u > v) std::swap(u, v);
  }
  std::sort(edges.begin(), edges.end());
  auto dup = std::adjacent_find(edges.begin(), edges.end());
  if (dup != edges.end())
    throw std::invalid_argument("graph: duplicate edge " + std::to_string(dup->first + 1) + "-" +
                                std::to_string(dup->second + 1));
  edges_ = std::move(edges);
  for (auto [u, v] : edges_) {
    adjacency_[static_cast<std::size_t>(u)].push_back(v);
    adjacency_[static_cast<std::size_t>(v)].push_back(u);
  }
  for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
}

bool CommGraph::has_edge(Index u, Index v) const {
  const auto& nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

std::optional<double> algebraic_connectivity(const CommGraph& g) {
  const Index n = g.vertex_count();
  if (n < 2 || n > kSpectralVertexLimit) return std::nullopt;
  Eigen::SelfAdjointEigenSolver<Matrix<double>> es(laplacian<double>(g), Eigen::EigenvaluesOnly);
  return es.eigenvalues()[1];
}

bool is_connected(const CommGraph& g) {
  const Index n = g.vertex_count();
  if (n == 0) return false;
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::queue<Index> frontier;
  frontier.push(0);
  seen[0] = 1;
  Index reached = 1;
  while (!frontier.empty()) {
    const Index u = frontier.front();
    frontier.pop();
    for (Index v : g.neighbors(u))
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        ++reached;
        frontier.push(v);
      }
  }
  return reached == n;
}

InducedSubgraph induced_subgraph(const CommGraph& g, const std::vector<Index>& vertices) {
  std::vector<Index> local(static_cast<std::size_t>(g.vertex_count()), -1);
  for (std::size_t k = 0; k < vertices.size(); ++k) {
    const Index v = vertices[k];
    if (v < 0 || v >= g.vertex_count()) throw std::invalid_argument("induced_subgraph: vertex out of range");
    if (k > 0 && v <= vertices[k - 1]) throw std::invalid_argument("induced_subgraph: vertices must ascend");
    local[static_cast<std::size_t>(v)] = static_cast<Index>(k);
  }
  std::vector<Edge> edges;
  for (Index v : vertices)
    for (Index w : g.neighbors(v))
      if (w > v && local[static_cast<std::size_t>(w)] >= 0)
        edges.emplace_back(local[static_cast<std::size_t>(v)], local[static_cast<std::size_t>(w)]);
  return {CommGraph(static_cast<Index>(vertices.size()), std::move(edges)), vertices};
}

std::vector<Index> disconnected_components(const CommGraph& g, const std::vector<std::vector<Index>>& groups,
                                           std::vector<Index>* empty_groups) {
  std::vector<Index> bad;
  // Traversal restricted to the group; marks are stamped with the component id.
  std::vector<Index> member(static_cast<std::size_t>(g.vertex_count()), -1);
  std::vector<Index> visited(static_cast<std::size_t>(g.vertex_count()), -1);
  std::vector<Index> stack;
  for (std::size_t m = 0; m < groups.size(); ++m) {
    const auto& grp = groups[m];
    const auto stamp = static_cast<Index>(m);
    if (grp.empty()) {
      if (empty_groups) empty_groups->push_back(stamp);
      continue;
    }
    for (Index v : grp) member[static_cast<std::size_t>(v)] = stamp;
    stack.assign(1, grp.front());
    visited[static_cast<std::size_t>(grp.front())] = stamp;
    std::size_t reached = 1;
    while (!stack.empty()) {
      const Index u = stack.back();
      stack.pop_back();
      for (Index w : g.neighbors(u)) {
        const auto wi = static_cast<std::size_t>(w);
        if (member[wi] == stamp && visited[wi] != stamp) {
          visited[wi] = stamp;
          ++reached;
          stack.push_back(w);
        }
      }
    }
    if (reached != grp.size()) bad.push_back(stamp);
  }
  return bad;
}

CommGraph grid_mesh(Index rows, Index cols, double radius) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("grid_mesh: dimensions must be positive");
  if (!(radius >= 1.0)) throw std::invalid_argument("grid_mesh: radius must be at least 1");
  const auto reach = static_cast<Index>(std::floor(radius));
  std::vector<Edge> edges;
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      for (Index dr = 0; dr <= reach; ++dr)
        for (Index dc = -reach; dc <= reach; ++dc) {
          if (dr == 0 && dc <= 0) continue;
          const Index r2 = r + dr, c2 = c + dc;
          if (r2 >= rows || c2 < 0 || c2 >= cols) continue;
          if (static_cast<double>(dr * dr + dc * dc) > radius * radius + 1e-12) continue;
          edges.emplace_back(r * cols + c, r2 * cols + c2);
        }
  return CommGraph(rows * cols, std::move(edges));
}

CommGraph complete_graph(Index n) {
  std::vector<Edge> edges;
  for (Index u = 0; u < n; ++u)
    for (Index v = u + 1; v < n; ++v) edges.emplace_back(u, v);
  return CommGraph(n, std::move(edges));
}

}  // namespace fieldrec
