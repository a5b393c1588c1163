#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "mixdemo/error.hpp"
#include "mixdemo/pcst.hpp"

using namespace mixdemo;

namespace {

std::vector<Ranked> ranking(std::initializer_list<std::int64_t> keys) {
  std::vector<Ranked> out;
  double s = 1.0;
  for (auto k : keys) {
    out.push_back({k, s});
    s -= 0.1;
  }
  return out;
}

double max_node_prize(const PcstInstance& inst) {
  double best = 0.0;
  for (double p : inst.node_prizes) best = std::max(best, p);
  return best;
}

struct Embedded {
  GraphPtr graph;
  std::vector<Vector> nodes;
  std::vector<Vector> edges;
};

Embedded embed_graph(GraphPtr g, std::size_t dim = 64) {
  Embedded e{g, {}, {}};
  for (const auto& n : g->nodes()) e.nodes.push_back(hash_embed(n.text, dim, 0));
  for (const auto& x : g->edges()) e.edges.push_back(hash_embed(x.text, dim, 0));
  return e;
}

}  // namespace

TEST_CASE("assign_prizes: rank-based values") {
  const auto p = assign_prizes(ranking({4, 9, 1}), ranking({0, 2}), 3, 2);
  CHECK(p.node_prize(4) == 3.0);
  CHECK(p.node_prize(9) == 2.0);
  CHECK(p.node_prize(1) == 1.0);
  CHECK(p.node_prize(7) == 0.0);
  CHECK(p.edge_prize(0) == 2.0);
  CHECK(p.edge_prize(2) == 1.0);
  CHECK(p.edge_prize(5) == 0.0);
}

TEST_CASE("assign_prizes: k beyond the ranking and invalid k") {
  const auto p = assign_prizes(ranking({2}), ranking({}), 3, 3);
  CHECK(p.node_prize(2) == 3.0);
  CHECK(p.node_prizes.size() == 1);
  CHECK(p.edge_prizes.empty());
  CHECK_THROWS_AS(assign_prizes(ranking({2}), ranking({}), 0, 3), UsageError);
  const std::vector<Ranked> unsorted{{1, 0.1}, {2, 0.9}};
  CHECK_THROWS_AS(assign_prizes(unsorted, ranking({}), 2, 2), UsageError);
}

TEST_CASE("edges_to_virtual: zero edge prizes leave the instance alone") {
  const PcstInstance inst{{1.0, 0.0, 2.0}, {{0, 1, 1.0, 0.0}, {1, 2, 0.5, 0.0}}};
  const auto r = edges_to_virtual(inst);
  CHECK(r.instance.node_prizes == inst.node_prizes);
  REQUIRE(r.instance.edges.size() == 2);
  CHECK(r.instance.edges[0].cost == 1.0);
  CHECK(r.instance.edges[1].cost == 0.5);
  CHECK(r.virtual_node_edge.empty());
}

TEST_CASE("edges_to_virtual: profitable edge becomes a virtual node") {
  const PcstInstance inst{{0.0, 0.0}, {{0, 1, 1.0, 3.0}}};
  const auto r = edges_to_virtual(inst);
  REQUIRE(r.instance.node_count() == 3);
  CHECK(r.instance.node_prizes[2] == 2.0);
  REQUIRE(r.instance.edges.size() == 2);
  for (const auto& e : r.instance.edges) {
    CHECK(e.cost == 0.0);
    CHECK(e.prize == 0.0);
  }
  CHECK(r.virtual_node_edge == std::vector<std::size_t>{0});
}

TEST_CASE("edges_to_virtual: unprofitable prized edge gets a discount") {
  const PcstInstance inst{{0.0, 0.0}, {{0, 1, 2.0, 0.5}}};
  const auto r = edges_to_virtual(inst);
  CHECK(r.instance.node_count() == 2);
  REQUIRE(r.instance.edges.size() == 1);
  CHECK(r.instance.edges[0].cost == 1.5);
}

TEST_CASE("exact oracle examples") {
  SUBCASE("all-zero prizes give the empty selection") {
    const PcstInstance inst{{0.0, 0.0, 0.0}, {{0, 1, 1.0, 0.0}, {1, 2, 1.0, 0.0}}};
    const auto s = solve_pcst_exact(inst);
    CHECK(s.empty());
    CHECK(s.objective == 0.0);
  }
  SUBCASE("path with two prized ends") {
    const auto s = solve_pcst_exact(fixtures::path_19());
    CHECK(s.objective == doctest::Approx(19.0));
    CHECK(s.nodes.size() == 2);
  }
  SUBCASE("bridging a zero-prize middle node") {
    const auto s = solve_pcst_exact(fixtures::path_8());
    CHECK(s.objective == doctest::Approx(8.0));
    CHECK(s.nodes.size() == 3);
  }
  SUBCASE("size limit") {
    std::mt19937_64 rng(1);
    const auto inst = fixtures::random_instance(rng, 10, 12);
    CHECK_THROWS_AS(solve_pcst_exact(inst, 3), UsageError);
  }
}

TEST_CASE("solve_pcst examples") {
  SUBCASE("single node") {
    const PcstInstance inst{{4.0}, {}};
    const auto s = solve_pcst(inst);
    CHECK(s.nodes == std::vector<std::size_t>{0});
    CHECK(s.objective == 4.0);
  }
  SUBCASE("path with two prized ends") {
    const auto s = solve_pcst(fixtures::path_19());
    CHECK(s.objective == doctest::Approx(19.0));
  }
  SUBCASE("path through a zero-prize node") {
    const auto s = solve_pcst(fixtures::path_8());
    CHECK(s.objective == doctest::Approx(8.0));
  }
  SUBCASE("expensive edge is not bought") {
    const PcstInstance inst{{3.0, 2.0}, {{0, 1, 10.0, 0.0}}};
    const auto s = solve_pcst(inst);
    CHECK(s.nodes == std::vector<std::size_t>{0});
    CHECK(s.objective == 3.0);
  }
  SUBCASE("edge prize pays for the edge") {
    const PcstInstance inst{{0.0, 0.0}, {{0, 1, 1.0, 3.0}}};
    const auto s = solve_pcst(inst);
    CHECK(s.edges == std::vector<std::size_t>{0});
    CHECK(s.objective == doctest::Approx(2.0));
  }
}

TEST_CASE("reduction preserves the optimum on random instances") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 150; ++trial) {
    const auto inst = fixtures::random_instance(rng, 7, 8);
    const auto reduced = edges_to_virtual(inst);
    const auto direct = solve_pcst_exact(inst, 64);
    const auto via = solve_pcst_exact(reduced.instance, 64);
    const auto back = project_back(reduced, inst, via);
    CAPTURE(trial);
    CHECK(std::abs(via.objective - direct.objective) < 1e-9);
    CHECK(std::abs(back.objective - direct.objective) < 1e-9);
    CHECK(is_connected(inst, back));
  }
}

TEST_CASE("solve_pcst properties on random instances") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = fixtures::random_instance(rng, 10, 12);
    const auto s = solve_pcst(inst);
    const auto best = solve_pcst_exact(inst, 32);
    CAPTURE(trial);
    CHECK(is_connected(inst, s));
    CHECK(std::abs(s.objective - objective(inst, s.nodes, s.edges)) < 1e-9);
    CHECK(s.objective >= max_node_prize(inst) - 1e-9);
    CHECK(s.objective <= best.objective + 1e-9);
    for (std::size_t e : s.edges) {
      CHECK(std::binary_search(s.nodes.begin(), s.nodes.end(), inst.edges[e].u));
      CHECK(std::binary_search(s.nodes.begin(), s.nodes.end(), inst.edges[e].v));
    }
  }
}

TEST_CASE("retrieve_subgraph: query equal to a node embedding") {
  std::vector<TextNode> nodes;
  for (int i = 0; i < 6; ++i) nodes.push_back({i, "distinct entity " + std::string(1, 'a' + i) + "x"});
  auto g = std::make_shared<const TextualGraph>(
      nodes, std::vector<TextEdge>{{0, 1, "p"}, {1, 2, "q"}, {2, 3, "r"}, {3, 4, "s"}, {4, 5, "t"}},
      std::map<std::string, NodeId>{});
  const auto e = embed_graph(g);
  const auto r = retrieve_subgraph(g, e.nodes[3], e.nodes, e.edges, {1, 1, 0.5});
  CHECK(r.node_ranking.front().key == 3);
  CHECK(r.subgraph.node_ids.contains(3));
  CHECK(validate(r.subgraph).empty());
}

TEST_CASE("retrieve_subgraph: empty graph and misaligned embeddings") {
  auto empty = std::make_shared<const TextualGraph>();
  CHECK_THROWS_AS(retrieve_subgraph(empty, hash_embed("q", 8, 0), {}, {}), UsageError);
  auto g = std::make_shared<const TextualGraph>(std::vector<TextNode>{{0, "a"}},
                                                std::vector<TextEdge>{},
                                                std::map<std::string, NodeId>{});
  CHECK_THROWS_AS(retrieve_subgraph(g, hash_embed("q", 8, 0), {}, {}), UsageError);
}

TEST_CASE("retrieve_subgraph on the mushroom graph") {
  const auto examples = load_dataset(fixtures::data_path("mushroom.jsonl"));
  REQUIRE(!examples.empty());
  const auto& ex = examples.front();
  const auto e = embed_graph(ex.graph);
  const Vector q = hash_embed(ex.question, 64, 0);
  const auto r = retrieve_subgraph(ex.graph, q, e.nodes, e.edges);
  CHECK(!r.subgraph.empty());
  CHECK(r.subgraph.node_ids.contains(r.node_ranking.front().key));
  CHECK(validate(r.subgraph).empty());
  const auto inst = make_instance(*ex.graph, r.prizes, 0.5);
  CHECK(is_connected(inst, r.solution));
  // Deterministic across repeated calls.
  const auto again = retrieve_subgraph(ex.graph, q, e.nodes, e.edges);
  CHECK(again.subgraph.node_ids == r.subgraph.node_ids);
  CHECK(again.subgraph.edge_indices == r.subgraph.edge_indices);
}

TEST_CASE("make_instance rejects a non-positive edge cost") {
  auto g = std::make_shared<const TextualGraph>(std::vector<TextNode>{{0, "a"}, {1, "b"}},
                                                std::vector<TextEdge>{{0, 1, "e"}},
                                                std::map<std::string, NodeId>{});
  const auto p = assign_prizes(ranking({0}), ranking({0}), 1, 1);
  CHECK_THROWS_AS(make_instance(*g, p, 0.0), UsageError);
  CHECK_THROWS_AS(make_instance(*g, p, -1.0), UsageError);
}

namespace {

// Test-side brute force: every edge subset that forms one connected component,
// plus every single node and the empty selection.
double brute_force_optimum(const PcstInstance& inst) {
  double best = 0.0;
  for (double p : inst.node_prizes) best = std::max(best, p);
  const std::size_t m = inst.edges.size();
  for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
    std::vector<std::size_t> parent(inst.node_count());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
    const auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    std::vector<bool> used(inst.node_count(), false);
    double value = 0.0;
    for (std::size_t e = 0; e < m; ++e) {
      if (!(mask & (1u << e))) continue;
      const auto& edge = inst.edges[e];
      value += edge.prize - edge.cost;
      used[edge.u] = used[edge.v] = true;
      parent[find(edge.u)] = find(edge.v);
    }
    std::size_t root = inst.node_count();
    bool connected = true;
    for (std::size_t v = 0; v < used.size(); ++v) {
      if (!used[v]) continue;
      value += inst.node_prizes[v];
      if (root == inst.node_count()) root = find(v);
      connected = connected && find(v) == root;
    }
    if (connected) best = std::max(best, value);
  }
  return best;
}

}  // namespace

TEST_CASE("exact solver agrees with a brute-force enumeration") {
  std::mt19937_64 rng(5150);
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = fixtures::random_instance(rng, 10, 12);
    CAPTURE(trial);
    CHECK(std::abs(solve_pcst_exact(inst, 24).objective - brute_force_optimum(inst)) < 1e-9);
  }
}
