#include "mixdemo/pcst.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mixdemo/error.hpp"

namespace mixdemo {

namespace {

constexpr double kEps = 1e-12;

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // Returns the surviving root.
  std::size_t unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
    return a;
  }

 private:
  std::vector<std::size_t> parent_;
};

void check_ranking_sorted(std::span<const Ranked> ranking, const char* what) {
  for (std::size_t i = 1; i < ranking.size(); ++i) {
    if (ranking[i].score > ranking[i - 1].score) {
      throw UsageError(std::string(what) + " ranking is not sorted by descending score");
    }
  }
}

PcstSolution finalize(const PcstInstance& instance, std::vector<std::size_t> nodes,
                      std::vector<std::size_t> edges) {
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  PcstSolution s;
  s.objective = objective(instance, nodes, edges);
  s.nodes = std::move(nodes);
  s.edges = std::move(edges);
  return s;
}

// Moat growth on a node-prize-only instance. Returns the edges that went
// tight, which form a forest over the instance nodes.
std::vector<std::size_t> grow_forest(const PcstInstance& inst) {
  const std::size_t n = inst.node_count();
  const std::size_t m = inst.edges.size();
  DisjointSets clusters(n);
  std::vector<double> budget(inst.node_prizes);
  std::vector<char> active(n);
  for (std::size_t v = 0; v < n; ++v) active[v] = budget[v] > kEps;
  std::vector<double> slack(m);
  for (std::size_t e = 0; e < m; ++e) slack[e] = inst.edges[e].cost;

  std::vector<std::size_t> forest;
  std::vector<std::size_t> root_u(m), root_v(m);
  for (;;) {
    double step = std::numeric_limits<double>::infinity();
    enum { kNone, kEdge, kCluster } event = kNone;
    std::size_t which = 0;

    for (std::size_t e = 0; e < m; ++e) {
      root_u[e] = clusters.find(inst.edges[e].u);
      root_v[e] = clusters.find(inst.edges[e].v);
      if (root_u[e] == root_v[e]) continue;
      const int rate = active[root_u[e]] + active[root_v[e]];
      if (rate == 0) continue;
      const double t = std::max(0.0, slack[e]) / rate;
      if (t < step) {
        step = t;
        event = kEdge;
        which = e;
      }
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (clusters.find(v) != v || !active[v]) continue;
      if (budget[v] < step) {
        step = budget[v];
        event = kCluster;
        which = v;
      }
    }
    if (event == kNone) break;

    for (std::size_t e = 0; e < m; ++e) {
      if (root_u[e] == root_v[e]) continue;
      slack[e] -= step * (active[root_u[e]] + active[root_v[e]]);
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (clusters.find(v) == v && active[v]) budget[v] = std::max(0.0, budget[v] - step);
    }

    if (event == kEdge) {
      const std::size_t a = root_u[which];
      const std::size_t b = root_v[which];
      const double merged = budget[a] + budget[b];
      const std::size_t r = clusters.unite(a, b);
      budget[r] = merged;
      active[r] = merged > kEps;
      forest.push_back(which);
    } else {
      active[which] = 0;
      budget[which] = 0.0;
    }
  }
  return forest;
}

// Best connected subtree of the forest: for every candidate root, a
// post-order pass keeps a child subtree iff it pays for its connecting edge.
PcstSolution prune_forest(const PcstInstance& inst, const std::vector<std::size_t>& forest) {
  const std::size_t n = inst.node_count();
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(n);  // (neighbor, edge)
  for (std::size_t e : forest) {
    adj[inst.edges[e].u].emplace_back(inst.edges[e].v, e);
    adj[inst.edges[e].v].emplace_back(inst.edges[e].u, e);
  }

  std::vector<double> value(n);
  std::vector<std::size_t> parent(n), parent_edge(n), order;
  order.reserve(n);
  auto evaluate = [&](std::size_t root) {
    order.clear();
    parent[root] = root;
    order.push_back(root);
    for (std::size_t i = 0; i < order.size(); ++i) {
      const std::size_t v = order[i];
      for (auto [w, e] : adj[v]) {
        if (v != root && e == parent_edge[v]) continue;
        parent[w] = v;
        parent_edge[w] = e;
        order.push_back(w);
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) value[*it] = inst.node_prizes[*it];
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const std::size_t v = *it;
      if (v == root) continue;
      const double gain = value[v] - inst.edges[parent_edge[v]].cost;
      if (gain > 0.0) value[parent[v]] += gain;
    }
    return value[root];
  };

  double best = 0.0;
  std::optional<std::size_t> best_root;
  for (std::size_t r = 0; r < n; ++r) {
    const double v = evaluate(r);
    if (v > best + kEps) {
      best = v;
      best_root = r;
    }
  }
  if (!best_root) return {};

  evaluate(*best_root);
  std::vector<char> keep(n, 0);
  std::vector<std::size_t> nodes{*best_root}, edges;
  keep[*best_root] = 1;
  for (std::size_t v : order) {  // BFS order: parents are decided first
    if (v == *best_root || !keep[parent[v]]) continue;
    if (value[v] - inst.edges[parent_edge[v]].cost > 0.0) {
      keep[v] = 1;
      nodes.push_back(v);
      edges.push_back(parent_edge[v]);
    }
  }
  return finalize(inst, std::move(nodes), std::move(edges));
}

}  // namespace

double PrizeAssignment::node_prize(NodeId id) const {
  auto it = node_prizes.find(id);
  return it == node_prizes.end() ? 0.0 : it->second;
}

double PrizeAssignment::edge_prize(std::size_t edge) const {
  auto it = edge_prizes.find(edge);
  return it == edge_prizes.end() ? 0.0 : it->second;
}

PrizeAssignment assign_prizes(std::span<const Ranked> node_ranking,
                              std::span<const Ranked> edge_ranking, int k_nodes, int k_edges) {
  if (k_nodes <= 0 || k_edges <= 0) throw UsageError("k_nodes and k_edges must be positive");
  check_ranking_sorted(node_ranking, "node");
  check_ranking_sorted(edge_ranking, "edge");
  PrizeAssignment p;
  p.k_nodes = k_nodes;
  p.k_edges = k_edges;
  const auto kn = static_cast<std::size_t>(k_nodes);
  const auto ke = static_cast<std::size_t>(k_edges);
  for (std::size_t r = 0; r < std::min(kn, node_ranking.size()); ++r) {
    p.node_prizes[node_ranking[r].key] = static_cast<double>(kn - r);
  }
  for (std::size_t r = 0; r < std::min(ke, edge_ranking.size()); ++r) {
    p.edge_prizes[static_cast<std::size_t>(edge_ranking[r].key)] = static_cast<double>(ke - r);
  }
  return p;
}

PcstInstance make_instance(const TextualGraph& graph, const PrizeAssignment& prizes,
                           double edge_cost) {
  if (!(edge_cost > 0.0) || !std::isfinite(edge_cost)) {
    throw UsageError("edge cost must be a positive finite number");
  }
  PcstInstance inst;
  inst.node_prizes.reserve(graph.nodes().size());
  for (const auto& n : graph.nodes()) inst.node_prizes.push_back(prizes.node_prize(n.id));
  inst.edges.reserve(graph.edges().size());
  for (std::size_t i = 0; i < graph.edges().size(); ++i) {
    const auto& e = graph.edges()[i];
    auto u = graph.position(e.src);
    auto v = graph.position(e.dst);
    if (!u || !v) throw DataError("edge " + std::to_string(i) + " has a dangling endpoint");
    inst.edges.push_back({*u, *v, edge_cost, prizes.edge_prize(i)});
  }
  return inst;
}

double objective(const PcstInstance& instance, std::span<const std::size_t> nodes,
                 std::span<const std::size_t> edges) {
  double total = 0.0;
  for (std::size_t v : nodes) total += instance.node_prizes.at(v);
  for (std::size_t e : edges) total += instance.edges.at(e).prize - instance.edges.at(e).cost;
  return total;
}

bool is_connected(const PcstInstance& instance, const PcstSolution& solution) {
  if (solution.nodes.size() <= 1) return solution.edges.empty();
  std::vector<std::size_t> local(instance.node_count(), SIZE_MAX);
  for (std::size_t i = 0; i < solution.nodes.size(); ++i) local[solution.nodes[i]] = i;
  DisjointSets sets(solution.nodes.size());
  for (std::size_t e : solution.edges) {
    const auto& edge = instance.edges.at(e);
    if (local[edge.u] == SIZE_MAX || local[edge.v] == SIZE_MAX) return false;
    sets.unite(local[edge.u], local[edge.v]);
  }
  for (std::size_t i = 1; i < solution.nodes.size(); ++i) {
    if (sets.find(i) != sets.find(0)) return false;
  }
  return true;
}

VirtualInstance edges_to_virtual(const PcstInstance& instance) {
  VirtualInstance out;
  out.original_nodes = instance.node_count();
  out.instance.node_prizes = instance.node_prizes;
  for (std::size_t e = 0; e < instance.edges.size(); ++e) {
    const PcstEdge& edge = instance.edges[e];
    if (edge.prize > edge.cost) {
      const std::size_t w = out.instance.node_prizes.size();
      out.instance.node_prizes.push_back(edge.prize - edge.cost);
      out.virtual_node_edge.push_back(e);
      out.instance.edges.push_back({edge.u, w, 0.0, 0.0});
      out.instance.edges.push_back({w, edge.v, 0.0, 0.0});
      out.edge_origin.push_back(e);
      out.edge_origin.push_back(e);
    } else {
      out.instance.edges.push_back({edge.u, edge.v, edge.cost - edge.prize, 0.0});
      out.edge_origin.push_back(e);
    }
  }
  return out;
}

PcstSolution project_back(const VirtualInstance& reduced, const PcstInstance& original,
                          const PcstSolution& solution) {
  std::vector<std::size_t> nodes, edges;
  auto take_edge = [&](std::size_t e) {
    edges.push_back(e);
    nodes.push_back(original.edges[e].u);
    nodes.push_back(original.edges[e].v);
  };
  for (std::size_t v : solution.nodes) {
    if (v < reduced.original_nodes) {
      nodes.push_back(v);
    } else {
      take_edge(reduced.virtual_node_edge.at(v - reduced.original_nodes));
    }
  }
  for (std::size_t e : solution.edges) take_edge(reduced.edge_origin.at(e));
  return finalize(original, std::move(nodes), std::move(edges));
}

PcstSolution solve_pcst_exact(const PcstInstance& instance, std::size_t limit) {
  const std::size_t n = instance.node_count();
  const std::size_t m = instance.edges.size();
  if (n + m > limit) {
    throw UsageError("instance with " + std::to_string(n + m) +
                     " elements exceeds the exact-solver limit of " + std::to_string(limit));
  }
  if (m >= 63) throw UsageError("exact solver supports at most 62 edges");

  PcstSolution best;  // empty selection, objective 0
  for (std::size_t v = 0; v < n; ++v) {
    if (instance.node_prizes[v] > best.objective) best = finalize(instance, {v}, {});
  }

  std::vector<std::size_t> nodes, edges;
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << m); ++mask) {
    edges.clear();
    nodes.clear();
    for (std::size_t e = 0; e < m; ++e) {
      if (mask >> e & 1) {
        edges.push_back(e);
        nodes.push_back(instance.edges[e].u);
        nodes.push_back(instance.edges[e].v);
      }
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    const double value = objective(instance, nodes, edges);
    if (value <= best.objective) continue;
    PcstSolution candidate{nodes, edges, value};
    if (is_connected(instance, candidate)) best = std::move(candidate);
  }
  return best;
}

PcstSolution solve_pcst(const PcstInstance& instance) {
  const bool has_edge_prizes = std::any_of(instance.edges.begin(), instance.edges.end(),
                                           [](const PcstEdge& e) { return e.prize > 0.0; });
  if (has_edge_prizes) {
    VirtualInstance reduced = edges_to_virtual(instance);
    return project_back(reduced, instance, solve_pcst(reduced.instance));
  }
  return prune_forest(instance, grow_forest(instance));
}

RetrievalResult retrieve_subgraph(const GraphPtr& graph, const Vector& query,
                                  std::span<const Vector> node_vecs,
                                  std::span<const Vector> edge_vecs,
                                  const RetrievalParams& params) {
  if (!graph || graph->empty()) throw UsageError("cannot retrieve from an empty graph");
  if (node_vecs.size() != graph->nodes().size() || edge_vecs.size() != graph->edges().size()) {
    throw UsageError("embeddings are not aligned with the graph elements");
  }
  std::vector<Candidate> node_cands, edge_cands;
  node_cands.reserve(node_vecs.size());
  for (std::size_t i = 0; i < node_vecs.size(); ++i) {
    node_cands.emplace_back(graph->nodes()[i].id, node_vecs[i]);
  }
  edge_cands.reserve(edge_vecs.size());
  for (std::size_t i = 0; i < edge_vecs.size(); ++i) {
    edge_cands.emplace_back(static_cast<std::int64_t>(i), edge_vecs[i]);
  }

  RetrievalResult result;
  result.node_ranking = top_k(query, node_cands, static_cast<std::size_t>(std::max(params.k_nodes, 0)));
  result.edge_ranking = top_k(query, edge_cands, static_cast<std::size_t>(std::max(params.k_edges, 0)));
  result.prizes = assign_prizes(result.node_ranking, result.edge_ranking, params.k_nodes,
                                params.k_edges);

  const PcstInstance instance = make_instance(*graph, result.prizes, params.edge_cost);
  const VirtualInstance reduced = edges_to_virtual(instance);
  result.solution = project_back(reduced, instance, solve_pcst(reduced.instance));

  result.subgraph.parent = graph;
  if (result.solution.empty()) {
    result.fallback = true;
    result.subgraph.node_ids.insert(result.node_ranking.front().key);
    return result;
  }
  for (std::size_t v : result.solution.nodes) {
    result.subgraph.node_ids.insert(graph->nodes()[v].id);
  }
  result.subgraph.edge_indices.insert(result.solution.edges.begin(), result.solution.edges.end());
  return result;
}

}  // namespace mixdemo
