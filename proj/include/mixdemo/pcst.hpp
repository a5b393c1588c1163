#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mixdemo/embedding.hpp"
#include "mixdemo/graph_store.hpp"

namespace mixdemo {

// Rank-based prizes: the item at 1-based rank r <= k gets k - r + 1, every
// other item gets nothing (absent from the map).
struct PrizeAssignment {
  std::map<NodeId, double> node_prizes;
  std::map<std::size_t, double> edge_prizes;
  int k_nodes = 0;
  int k_edges = 0;

  double node_prize(NodeId id) const;
  double edge_prize(std::size_t edge) const;
};

PrizeAssignment assign_prizes(std::span<const Ranked> node_ranking,
                              std::span<const Ranked> edge_ranking, int k_nodes, int k_edges);

struct PcstEdge {
  std::size_t u = 0;
  std::size_t v = 0;
  double cost = 0.0;
  double prize = 0.0;
};

// Dense-indexed instance. Connectivity is undirected; parallel edges allowed.
struct PcstInstance {
  std::vector<double> node_prizes;
  std::vector<PcstEdge> edges;

  std::size_t node_count() const { return node_prizes.size(); }
};

/// Instance over a textual graph with uniform edge cost. Dense node i is
/// graph.nodes()[i]; instance edge j is graph.edges()[j].
PcstInstance make_instance(const TextualGraph& graph, const PrizeAssignment& prizes,
                           double edge_cost);

struct PcstSolution {
  std::vector<std::size_t> nodes;  // sorted dense indices
  std::vector<std::size_t> edges;  // sorted edge indices
  double objective = 0.0;

  bool empty() const { return nodes.empty(); }
};

// Sum of node and edge prizes in the selection minus the cost of its edges.
double objective(const PcstInstance& instance, std::span<const std::size_t> nodes,
                 std::span<const std::size_t> edges);
// Empty, a single node, or a connected edge-induced structure whose edge
// endpoints are all selected.
bool is_connected(const PcstInstance& instance, const PcstSolution& solution);

/// Node-prize-only form of an instance. An edge with prize p > cost c becomes
/// a virtual node of prize p - c joined to both endpoints by zero-cost
/// half-edges; an edge with 0 < p <= c stays a plain edge of cost c - p.
/// Either way every original selection keeps its objective, and projecting a
/// virtual selection back never lowers it, so the two optima coincide.
struct VirtualInstance {
  PcstInstance instance;
  std::size_t original_nodes = 0;
  // For each instance node >= original_nodes, the original edge it stands for.
  std::vector<std::size_t> virtual_node_edge;
  // For each instance edge, the original edge it came from.
  std::vector<std::size_t> edge_origin;
};

VirtualInstance edges_to_virtual(const PcstInstance& instance);
PcstSolution project_back(const VirtualInstance& reduced, const PcstInstance& original,
                          const PcstSolution& solution);

/// Exhaustive optimum over every connected edge subset plus every single
/// node (and the empty selection). Throws UsageError when
/// |V| + |E| > limit.
PcstSolution solve_pcst_exact(const PcstInstance& instance, std::size_t limit = 16);

/// Goemans-Williamson moat growth followed by an exact best-subtree pruning
/// of the resulting forest. Edge prizes are handled through
/// edges_to_virtual. The result is connected (or empty) and scores at least
/// max(0, max node prize).
PcstSolution solve_pcst(const PcstInstance& instance);

struct RetrievalParams {
  int k_nodes = 3;
  int k_edges = 3;
  double edge_cost = 0.5;
};

struct RetrievalResult {
  Subgraph subgraph;
  std::vector<Ranked> node_ranking;  // keys are node ids
  std::vector<Ranked> edge_ranking;  // keys are edge indices
  PrizeAssignment prizes;
  PcstSolution solution;  // over the original instance
  bool fallback = false;  // solver returned nothing; top-1 node used
};

/// top_k -> assign_prizes -> edges_to_virtual -> solve_pcst -> project back.
/// node_vecs/edge_vecs align with graph->nodes()/graph->edges().
RetrievalResult retrieve_subgraph(const GraphPtr& graph, const Vector& query,
                                  std::span<const Vector> node_vecs,
                                  std::span<const Vector> edge_vecs,
                                  const RetrievalParams& params = {});

}  // namespace mixdemo
