#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "mixdemo/encoder.hpp"
#include "mixdemo/error.hpp"

using namespace mixdemo;
using nlohmann::json;

namespace {

Checkpoint params_of(const json& j) { return checkpoint_from_json(j.dump()); }

double max_abs_diff(const Vec& a, const Vec& b) {
  REQUIRE(a.size() == b.size());
  return (a - b).cwiseAbs().maxCoeff();
}

Vec random_vec(std::mt19937_64& rng, std::size_t n) {
  Vec v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = fixtures::uniform(rng, -1.0, 1.0);
  return v;
}

GraphInput random_graph(std::mt19937_64& rng, std::size_t n, std::size_t m, std::size_t d) {
  GraphInput g;
  for (std::size_t i = 0; i < n; ++i) g.node_features.push_back(random_vec(rng, d));
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t u = rng() % n;
    std::size_t v = rng() % n;
    if (v == u) v = (u + 1) % n;
    g.edges.push_back({u, v, random_vec(rng, d)});
  }
  return g;
}

GraphInput permuted(const GraphInput& g, const std::vector<std::size_t>& perm) {
  // perm[old] = new
  GraphInput out;
  out.node_features.resize(g.node_features.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out.node_features[perm[i]] = g.node_features[i];
  for (const auto& e : g.edges) out.edges.push_back({perm[e.src], perm[e.dst], e.features});
  return out;
}

}  // namespace

TEST_CASE("layer forward matches the reference fixtures") {
  const auto& fx = fixtures::reference()["layers"];
  REQUIRE(fx.size() == 20);
  for (const auto& f : fx) {
    CAPTURE(f["seed"].get<int>());
    const auto ck = params_of(f["params"]);
    const GraphInput g = fixtures::graph(f["graph"]);
    const Vec q = fixtures::vec(f["query"]);
    const auto layer = f["layer"].get<std::size_t>();
    std::vector<Vec> states;
    for (const auto& s : f["states"]) states.push_back(fixtures::vec(s));

    for (const auto& gate : f["gates"]) {
      const auto src = gate["src"].get<std::size_t>();
      const auto dst = gate["dst"].get<std::size_t>();
      const auto& feats = g.edges[gate["edge"].get<std::size_t>()].features;
      const double zeta = edge_gate(states[src], states[dst], feats, q, ck.params, layer);
      CHECK(std::abs(zeta - gate["zeta"].get<double>()) < 1e-12);
    }
    const auto out = layer_forward(states, g, q, ck.params, layer);
    const auto& expected = f["expected_states"];
    REQUIRE(out.size() == expected.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(max_abs_diff(out[i], fixtures::vec(expected[i])) < 1e-12);
    }
  }
}

TEST_CASE("mushroom graph prompt matches the reference") {
  const auto& f = fixtures::reference()["mushroom"];
  const auto ck = params_of(f["params"]);
  const auto emb = encode_subgraph(fixtures::graph(f["graph"]), fixtures::vec(f["query"]), ck.params);
  CHECK(max_abs_diff(emb.z_s, fixtures::vec(f["z_s"])) < 1e-12);
  CHECK(max_abs_diff(emb.p_graph, fixtures::vec(f["p_graph"])) < 1e-12);
  CHECK(emb.p_graph.size() == 5);
}

TEST_CASE("batch loss matches the reference") {
  const auto& f = fixtures::reference()["loss"];
  const auto ck = params_of(f["params"]);
  REQUIRE(ck.head.has_value());
  std::vector<EncoderExample> batch;
  for (const auto& b : f["batch"]) {
    EncoderExample ex;
    ex.graph = fixtures::graph(b["graph"]);
    for (const auto& d : b["demos"]) ex.demos.push_back(fixtures::graph(d));
    ex.query = fixtures::vec(b["query"]);
    ex.label = b["label"].get<std::size_t>();
    batch.push_back(std::move(ex));
  }
  CHECK(std::abs(forward_loss(batch, ck.params, *ck.head) - f["loss"].get<double>()) < 1e-10);
}

TEST_CASE("zero parameters") {
  const EncoderDims dims{3, 4, 5, 2};
  const EncoderParams p = EncoderParams::zeros(dims);
  std::mt19937_64 rng(1);
  const GraphInput g = random_graph(rng, 4, 3, 3);
  const Vec q = random_vec(rng, 3);
  std::vector<Vec> states(4, Vec::Constant(4, 0.7));
  CHECK(edge_gate(states[0], states[1], g.edges[0].features, q, p, 0) == 0.0);
  const auto emb = encode_subgraph(g, q, p);
  CHECK(emb.z_s.isZero(0.0));
  CHECK(emb.p_graph.isZero(0.0));
}

TEST_CASE("isolated nodes keep their state; a single node is its lifted features") {
  const EncoderDims dims{3, 4, 5, 2};
  const EncoderParams p = init_params(dims, 5);
  std::mt19937_64 rng(2);
  GraphInput g = random_graph(rng, 3, 1, 3);
  g.edges[0].src = 0;
  g.edges[0].dst = 1;
  const Vec q = random_vec(rng, 3);
  std::vector<Vec> states{random_vec(rng, 4), random_vec(rng, 4), random_vec(rng, 4)};
  const auto out = layer_forward(states, g, q, p, 0);
  CHECK(out[2] == states[2]);

  GraphInput single;
  single.node_features.push_back(random_vec(rng, 3));
  const auto emb = encode_subgraph(single, q, p);
  CHECK(max_abs_diff(emb.z_s, p.lift.apply(single.node_features[0])) < 1e-15);
}

TEST_CASE("encoder rejects malformed graphs") {
  const EncoderDims dims{3, 4, 5, 1};
  const EncoderParams p = init_params(dims, 1);
  std::mt19937_64 rng(3);
  const Vec q = random_vec(rng, 3);
  GraphInput empty;
  CHECK_THROWS_AS(encode_subgraph(empty, q, p), UsageError);
  GraphInput loop = random_graph(rng, 2, 1, 3);
  loop.edges[0].dst = loop.edges[0].src;
  CHECK_THROWS_AS(encode_subgraph(loop, q, p), UsageError);
  GraphInput wide = random_graph(rng, 2, 1, 4);
  CHECK_THROWS_AS(encode_subgraph(wide, q, p), UsageError);
  CHECK_THROWS_AS(encode_subgraph(random_graph(rng, 2, 1, 3), random_vec(rng, 2), p), UsageError);
}

TEST_CASE("node relabelling does not change the graph embedding") {
  const EncoderDims dims{4, 6, 5, 3};
  const EncoderParams p = init_params(dims, 8);
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 2 + rng() % 6;
    const GraphInput g = random_graph(rng, n, 1 + rng() % (2 * n), 4);
    const Vec q = random_vec(rng, 4);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto a = encode_subgraph(g, q, p);
    const auto b = encode_subgraph(permuted(g, perm), q, p);
    CHECK(max_abs_diff(a.z_s, b.z_s) < 1e-12);
    CHECK(max_abs_diff(a.p_graph, b.p_graph) < 1e-12);
  }
}

TEST_CASE("the embedding depends on the query") {
  const EncoderParams p = init_params({4, 6, 5, 2}, 8);
  std::mt19937_64 rng(4);
  const GraphInput g = random_graph(rng, 4, 4, 4);
  const auto a = encode_subgraph(g, random_vec(rng, 4), p);
  const auto b = encode_subgraph(g, random_vec(rng, 4), p);
  CHECK(max_abs_diff(a.z_s, b.z_s) > 1e-6);
}

TEST_CASE("fusion examples") {
  EncoderParams p = EncoderParams::zeros({2, 2, 3, 1});
  p.query_proj.weight = Mat::Identity(2, 2);
  const Vec q = Vec::Unit(2, 0);
  const Vec z = Vec::Unit(2, 0);

  SUBCASE("no demonstrations") {
    const auto f = fuse_demonstrations(z, {}, q, p);
    CHECK(f.weights == std::vector<double>{1.0});
    CHECK(f.z_final == z);
  }
  SUBCASE("equal scores split evenly") {
    const std::vector<Vec> demos{Vec::Unit(2, 0) * 3.0};
    const auto f = fuse_demonstrations(z, demos, q, p);
    CHECK(f.weights[0] == doctest::Approx(0.5));
    CHECK(f.weights[1] == doctest::Approx(0.5));
    CHECK(max_abs_diff(f.z_final, Vec::Unit(2, 0) * 2.0) < 1e-15);
  }
  SUBCASE("zero-norm demo scores zero") {
    const std::vector<Vec> demos{Vec::Zero(2)};
    const auto f = fuse_demonstrations(z, demos, q, p);
    CHECK(f.scores[1] == 0.0);
  }
}

TEST_CASE("softmax of (ln 2, 0) is (2/3, 1/3)") {
  const std::vector<double> s{std::log(2.0), 0.0};
  const auto w = softmax(s);
  CHECK(std::abs(w[0] - 2.0 / 3.0) < 1e-15);
  CHECK(std::abs(w[1] - 1.0 / 3.0) < 1e-15);
  const std::vector<double> big{1000.0, 1000.0};
  CHECK(softmax(big)[0] == 0.5);
}

TEST_CASE("a zero head gives loss ln V") {
  const auto fx = standard_gradcheck_fixture(1);
  const SurrogateHead zero = SurrogateHead::zeros(8, {"a", "b", "c"});
  CHECK(std::abs(forward_loss(fx.batch, fx.params, zero) - std::log(3.0)) < 1e-15);
  CHECK_THROWS_AS(SurrogateHead::zeros(8, {}), UsageError);
}

TEST_CASE("gradient check") {
  SUBCASE("invalid eps") {
    const auto fx = standard_gradcheck_fixture(1);
    CHECK_THROWS_AS(grad_check(fx.batch, fx.params, fx.head, 0.0), UsageError);
    CHECK_THROWS_AS(grad_check(fx.batch, fx.params, fx.head, 0.5), UsageError);
  }
  SUBCASE("head only") {
    const auto fx = standard_gradcheck_fixture(1);
    const auto r = grad_check(fx.batch, fx.params, fx.head, 1e-6, GradCheckScope::kHeadOnly);
    CHECK(r.max_rel_error < 1e-7);
  }
  SUBCASE("full model, seeds 1 to 3") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto fx = standard_gradcheck_fixture(seed);
      const auto r = grad_check(fx.batch, fx.params, fx.head, 1e-5);
      CAPTURE(seed);
      CAPTURE(r.worst_tensor);
      CHECK(r.max_rel_error < 1e-4);
      CHECK(r.coordinates > 100);
    }
  }
}

TEST_CASE("backward loss equals forward loss") {
  const auto fx = standard_gradcheck_fixture(2);
  const auto g = backward(fx.batch, fx.params, fx.head);
  CHECK(g.loss == doctest::Approx(forward_loss(fx.batch, fx.params, fx.head)).epsilon(1e-14));
}

TEST_CASE("training no-ops and errors") {
  const auto fx = standard_gradcheck_fixture(1);
  const auto same = [&](TrainOptions o) {
    const auto r = train_encoder(fx.batch, fx.params, fx.head, o);
    auto a = fx.params;
    auto b = r.params;
    const auto ta = tensors(a);
    const auto tb = tensors(b);
    for (std::size_t i = 0; i < ta.size(); ++i) {
      CHECK(std::equal(ta[i].data.begin(), ta[i].data.end(), tb[i].data.begin()));
    }
  };
  same({0.05, 0, 0, true});
  same({0.0, 5, 0, true});
  CHECK_THROWS_AS(train_encoder(fx.batch, fx.params, fx.head, {-1.0, 1, 0, true}), UsageError);
  CHECK_THROWS_AS(train_encoder({}, fx.params, fx.head, {0.05, 1, 0, true}), UsageError);
}

TEST_CASE("training fits the toy task") {
  const auto task = fixtures::toy_task(32);
  const EncoderDims dims{32, 16, 16, 3};
  const auto run = [&] {
    return train_encoder(task.examples, init_params(dims, 3), init_head(16, task.vocab, 4),
                         {0.05, 200, 5, true});
  };
  const auto r = run();
  REQUIRE(r.curve.size() == 200);
  CHECK(r.curve.back() < 0.1 * r.initial_loss);
  CHECK(run().curve == r.curve);
}

TEST_CASE("initialization is seeded and bounded") {
  const EncoderDims dims{5, 7, 9, 2};
  auto a = init_params(dims, 12);
  auto b = init_params(dims, 12);
  auto c = init_params(dims, 13);
  const auto ta = tensors(a);
  const auto tb = tensors(b);
  const auto tc = tensors(c);
  bool differs = false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CHECK(std::equal(ta[i].data.begin(), ta[i].data.end(), tb[i].data.begin()));
    differs = differs || !std::equal(ta[i].data.begin(), ta[i].data.end(), tc[i].data.begin());
    if (ta[i].shape.size() == 2) {
      const double bound =
          std::sqrt(6.0 / static_cast<double>(ta[i].shape[0] + ta[i].shape[1]));
      for (double x : ta[i].data) CHECK(std::abs(x) <= bound);
    } else {
      for (double x : ta[i].data) CHECK(x == 0.0);
    }
  }
  CHECK(differs);
}

TEST_CASE("checkpoint round trip") {
  const EncoderDims dims{4, 5, 6, 2};
  auto p = init_params(dims, 31);
  auto head = init_head(6, {"x", "y"}, 32);
  const auto path = std::filesystem::temp_directory_path() / "mixdemo_ckpt.json";
  save_checkpoint(path, p, &head, 31);
  auto ck = load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK(ck.seed == 31);
  CHECK(ck.params.dims == dims);
  REQUIRE(ck.head.has_value());
  CHECK(ck.head->vocab == head.vocab);
  const auto ta = tensors(p);
  const auto tb = tensors(ck.params);
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CHECK(ta[i].name == tb[i].name);
    CHECK(std::equal(ta[i].data.begin(), ta[i].data.end(), tb[i].data.begin()));
  }
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.json"), UsageError);
  CHECK_THROWS_AS(checkpoint_from_json(R"({"format_version": 9})"), DataError);
}
