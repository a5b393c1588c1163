#include "fixtures.hpp"

#include <fstream>
#include <set>

#include "mixdemo/graph_store.hpp"

namespace fixtures {

using nlohmann::json;
using namespace mixdemo;

std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(MIXDEMO_TEST_DATA) / name;
}

std::filesystem::path reference_path() {
  return std::filesystem::path(MIXDEMO_TEST_REFERENCE) / "encoder_fixtures.json";
}

const json& reference() {
  static const json data = [] {
    std::ifstream in(reference_path());
    return json::parse(in);
  }();
  return data;
}

Vec vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

GraphInput graph(const json& j) {
  GraphInput g;
  for (const auto& n : j.at("nodes")) g.node_features.push_back(vec(n));
  for (const auto& e : j.at("edges")) {
    g.edges.push_back({e.at("src").get<std::size_t>(), e.at("dst").get<std::size_t>(),
                       vec(e.at("features"))});
  }
  return g;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

PcstInstance random_instance(std::mt19937_64& rng, std::size_t max_nodes, std::size_t max_edges) {
  const std::size_t n = 2 + rng() % (max_nodes - 1);
  PcstInstance inst;
  const int style = static_cast<int>(rng() % 3);
  for (std::size_t i = 0; i < n; ++i) {
    double p = 0.0;
    if (style == 0) p = (rng() % 2) ? static_cast<double>(rng() % 4) : 0.0;
    if (style == 1) p = uniform(rng, 0.0, 3.0);
    if (style == 2) p = (rng() % 3 == 0) ? uniform(rng, 1.0, 6.0) : 0.0;
    inst.node_prizes.push_back(p);
  }
  std::set<std::pair<std::size_t, std::size_t>> used;
  const std::size_t want = 1 + rng() % max_edges;
  for (std::size_t tries = 0; inst.edges.size() < want && tries < 200; ++tries) {
    std::size_t u = rng() % n;
    std::size_t v = rng() % n;
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    if (!used.insert({u, v}).second) continue;
    const double cost = style == 1 ? uniform(rng, 0.2, 2.0) : 0.5 + 0.5 * static_cast<double>(rng() % 3);
    const double prize = (rng() % 3 == 0) ? uniform(rng, 0.0, 3.0) : 0.0;
    inst.edges.push_back({u, v, cost, prize});
  }
  return inst;
}

PcstInstance path_19() { return {{10.0, 10.0}, {{0, 1, 1.0, 0.0}}}; }

PcstInstance path_8() { return {{5.0, 0.0, 5.0}, {{0, 1, 1.0, 0.0}, {1, 2, 1.0, 0.0}}}; }

std::vector<Vector> two_blobs(std::uint64_t seed, std::size_t dim) {
  std::mt19937_64 rng(seed);
  std::vector<Vector> out;
  for (int blob = 0; blob < 2; ++blob) {
    for (int i = 0; i < 10; ++i) {
      std::vector<double> v(dim);
      for (auto& x : v) x = uniform(rng, -0.1, 0.1);
      v[0] += blob == 0 ? 100.0 : -100.0;
      out.emplace_back(std::move(v));
    }
  }
  return out;
}

ToyTask toy_task(std::size_t d_in) {
  static const char* kColours[] = {"red", "green", "blue", "amber"};
  static const char* kObjects[] = {"apple", "kite", "stone", "boat", "lamp", "shoe", "cup", "drum"};
  ToyTask task;
  task.vocab.assign(std::begin(kColours), std::end(kColours));
  for (int i = 0; i < 8; ++i) {
    std::vector<TextNode> nodes;
    for (int j = 0; j < 3; ++j) {
      nodes.push_back({j, std::string(kColours[(i + j) % 4]) + " " + kObjects[(i + 2 * j) % 8]});
    }
    std::vector<TextEdge> edges{{0, 1, "near"}, {1, 2, "beside"}};
    auto g = std::make_shared<const TextualGraph>(nodes, edges, std::map<std::string, NodeId>{});
    std::vector<Vector> nv;
    std::vector<Vector> ev;
    for (const auto& n : nodes) nv.push_back(hash_embed(n.text, d_in, 0));
    for (const auto& e : edges) ev.push_back(hash_embed(e.text, d_in, 0));
    const Vector q = hash_embed(std::string("where is the ") + kObjects[i], d_in, 0);
    const RetrievalResult r = retrieve_subgraph(g, q, nv, ev);
    const auto top = static_cast<int>(r.node_ranking.front().key);
    task.examples.push_back({make_graph_input(whole_graph(g), nv, ev), to_eigen(q), {},
                             static_cast<std::size_t>((i + top) % 4)});
  }
  return task;
}

}  // namespace fixtures
