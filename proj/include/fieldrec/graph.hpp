#ifndef FIELDREC_GRAPH_HPP
#define FIELDREC_GRAPH_HPP

#include "fieldrec/field_model.hpp"

#include <optional>
#include <utility>

namespace fieldrec {

using Edge = std::pair<Index, Index>;

/// Simple undirected communication graph on vertices 0..N-1.
class CommGraph {
 public:
  CommGraph() = default;
  /// Throws std::invalid_argument on self-loops, out-of-range endpoints or
  /// duplicate edges. Edges are stored normalized (u < v) and sorted.
  explicit CommGraph(Index vertex_count, std::vector<Edge> edges = {});

  Index vertex_count() const { return vertex_count_; }
  Index edge_count() const { return static_cast<Index>(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Index>& neighbors(Index n) const { return adjacency_[static_cast<std::size_t>(n)]; }
  Index degree(Index n) const { return static_cast<Index>(neighbors(n).size()); }
  bool has_edge(Index u, Index v) const;

 private:
  Index vertex_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<Index>> adjacency_;
};

/// L = D - A.
template <typename Scalar = double>
Matrix<Scalar> laplacian(const CommGraph& g) {
  Matrix<Scalar> l = Matrix<Scalar>::Zero(g.vertex_count(), g.vertex_count());
  for (auto [u, v] : g.edges()) {
    l(u, v) = l(v, u) = Scalar(-1);
    l(u, u) += Scalar(1);
    l(v, v) += Scalar(1);
  }
  return l;
}

template <typename Scalar = double>
SparseMatrix<Scalar> sparse_laplacian(const CommGraph& g) {
  std::vector<Eigen::Triplet<Scalar>> trips;
  trips.reserve(static_cast<std::size_t>(4 * g.edge_count()));
  for (auto [u, v] : g.edges()) {
    trips.emplace_back(u, v, Scalar(-1));
    trips.emplace_back(v, u, Scalar(-1));
    trips.emplace_back(u, u, Scalar(1));
    trips.emplace_back(v, v, Scalar(1));
  }
  SparseMatrix<Scalar> l(g.vertex_count(), g.vertex_count());
  l.setFromTriplets(trips.begin(), trips.end());
  return l;
}

inline constexpr Index kSpectralVertexLimit = 2000;

/// lambda_2(L) by dense eigensolve; unavailable for N < 2 or N > 2000.
std::optional<double> algebraic_connectivity(const CommGraph& g);

/// Breadth-first reachability from vertex 0. The empty graph counts as
/// disconnected, a single vertex as connected.
bool is_connected(const CommGraph& g);

/// Subgraph induced by `vertices` (original ids, ascending), relabeled so
/// that vertex k of `graph` is `vertices[k]`.
struct InducedSubgraph {
  CommGraph graph;
  std::vector<Index> vertices;
};

InducedSubgraph induced_subgraph(const CommGraph& g, const std::vector<Index>& vertices);

/// G_m: the subgraph induced by the agents interested in component m.
/// Throws AssumptionViolation when no agent is interested in m.
template <typename Scalar>
InducedSubgraph interest_subgraph(const CommGraph& g, const FieldSystem<Scalar>& sys, Index m) {
  if (m < 0 || m >= sys.field_size()) throw std::out_of_range("component index out of range");
  const auto& group = sys.group(m);
  if (group.empty())
    throw AssumptionViolation("no agent is interested in component " + std::to_string(m + 1));
  return induced_subgraph(g, group);
}

struct TopologyReport {
  Report report;
  std::vector<Index> disconnected;  // components m with G_m disconnected
  std::vector<Index> empty;         // components with no interested agent

  bool passed() const { return report.passed(); }
};

std::vector<Index> disconnected_components(const CommGraph& g, const std::vector<std::vector<Index>>& groups,
                                           std::vector<Index>* empty_groups = nullptr);

/// Checks that the graph has one vertex per agent and that every G_m is
/// connected (decided by traversal).
template <typename Scalar>
TopologyReport check_topology(const CommGraph& g, const FieldSystem<Scalar>& sys) {
  TopologyReport out;
  const bool sized = g.vertex_count() == sys.agent_count();
  out.report.add("graph size", sized,
                 sized ? "" : "graph has " + std::to_string(g.vertex_count()) + " vertices for " +
                                  std::to_string(sys.agent_count()) + " agents");
  if (!sized) return out;
  std::vector<std::vector<Index>> groups;
  groups.reserve(static_cast<std::size_t>(sys.field_size()));
  for (Index m = 0; m < sys.field_size(); ++m) groups.push_back(sys.group(m));
  out.disconnected = disconnected_components(g, groups, &out.empty);
  out.report.add("interest groups nonempty", out.empty.empty(),
                 out.empty.empty() ? "" : "components " + format_indices(out.empty) + " have no interested agent");
  out.report.add("interest subgraphs connected", out.disconnected.empty(),
                 out.disconnected.empty() ? "" : "G_m disconnected for components " + format_indices(out.disconnected));
  return out;
}

/// Agents on a rows x cols lattice (id = r*cols + c), linked when their
/// Euclidean lattice distance is at most `radius`. radius = 1 gives the
/// 4-neighbour mesh.
CommGraph grid_mesh(Index rows, Index cols, double radius = 1.0);

CommGraph complete_graph(Index n);

}  // namespace fieldrec

#endif  // FIELDREC_GRAPH_HPP
