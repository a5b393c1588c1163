#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "encoder_internal.hpp"
#include "mixdemo/error.hpp"

namespace mixdemo {

Vec to_eigen(const Vector& v) {
  Vec out(static_cast<Eigen::Index>(v.dim()));
  for (std::size_t i = 0; i < v.dim(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

Vector from_eigen(const Vec& v) { return Vector(std::vector<double>(v.data(), v.data() + v.size())); }

void EncoderDims::check() const {
  if (d_in == 0 || d_hidden == 0 || d_llm == 0 || layers == 0) {
    throw UsageError("encoder dimensions and layer count must be positive");
  }
}

EncoderParams EncoderParams::zeros(const EncoderDims& dims) {
  dims.check();
  EncoderParams p;
  p.dims = dims;
  const std::size_t h = dims.d_hidden;
  const std::size_t in = dims.d_in;
  p.lift = Linear(h, in);
  p.layers.resize(dims.layers);
  for (auto& layer : p.layers) {
    layer.alpha = Linear(1, h + in);
    layer.beta = Linear(1, h + in);
    layer.msg = Linear(h, 2 * h + 2 * in);
  }
  p.gamma = Linear(1, 2 * in);
  p.query_proj = Linear(h, in);
  p.proj_hidden = Linear(dims.d_llm, h);
  p.proj_out = Linear(dims.d_llm, dims.d_llm);
  return p;
}

SurrogateHead SurrogateHead::zeros(std::size_t d_llm, std::vector<std::string> vocab) {
  if (vocab.empty()) throw UsageError("surrogate head needs a non-empty vocabulary");
  SurrogateHead head;
  head.out = Linear(vocab.size(), d_llm);
  head.vocab = std::move(vocab);
  return head;
}

namespace {

void add_linear(std::vector<TensorView>& out, const std::string& prefix, Linear& lin) {
  out.push_back({prefix + ".weight", {lin.out(), lin.in()},
                 std::span<double>(lin.weight.data(), static_cast<std::size_t>(lin.weight.size()))});
  out.push_back({prefix + ".bias", {lin.out()},
                 std::span<double>(lin.bias.data(), static_cast<std::size_t>(lin.bias.size()))});
}

void init_tensors(std::vector<TensorView> views, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& t : views) {
    if (t.shape.size() != 2) continue;  // biases stay zero
    const double s = std::sqrt(6.0 / static_cast<double>(t.shape[0] + t.shape[1]));
    for (double& x : t.data) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      x = (2.0 * u - 1.0) * s;
    }
  }
}

}  // namespace

std::vector<TensorView> tensors(EncoderParams& params) {
  std::vector<TensorView> out;
  add_linear(out, "lift", params.lift);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const std::string prefix = "layers." + std::to_string(l);
    add_linear(out, prefix + ".alpha", params.layers[l].alpha);
    add_linear(out, prefix + ".beta", params.layers[l].beta);
    add_linear(out, prefix + ".msg", params.layers[l].msg);
  }
  add_linear(out, "gamma", params.gamma);
  add_linear(out, "query_proj", params.query_proj);
  add_linear(out, "projector.0", params.proj_hidden);
  add_linear(out, "projector.1", params.proj_out);
  return out;
}

std::vector<TensorView> tensors(SurrogateHead& head) {
  std::vector<TensorView> out;
  add_linear(out, "head", head.out);
  return out;
}

EncoderParams init_params(const EncoderDims& dims, std::uint64_t seed) {
  EncoderParams p = EncoderParams::zeros(dims);
  init_tensors(tensors(p), seed);
  return p;
}

SurrogateHead init_head(std::size_t d_llm, std::vector<std::string> vocab, std::uint64_t seed) {
  SurrogateHead head = SurrogateHead::zeros(d_llm, std::move(vocab));
  init_tensors(tensors(head), seed);
  return head;
}

GraphInput make_graph_input(const Subgraph& subgraph, std::span<const Vector> node_vecs,
                            std::span<const Vector> edge_vecs) {
  if (!subgraph.parent) throw UsageError("subgraph has no parent graph");
  const TextualGraph& g = *subgraph.parent;
  if (node_vecs.size() != g.nodes().size() || edge_vecs.size() != g.edges().size()) {
    throw UsageError("embeddings are not aligned with the graph elements");
  }
  GraphInput input;
  std::map<NodeId, std::size_t> local;
  for (NodeId id : subgraph.node_ids) {
    local.emplace(id, input.node_features.size());
    input.node_features.push_back(to_eigen(node_vecs[*g.position(id)]));
  }
  for (std::size_t idx : subgraph.edge_indices) {
    const auto& e = g.edges().at(idx);
    auto s = local.find(e.src);
    auto d = local.find(e.dst);
    if (s == local.end() || d == local.end()) {
      throw UsageError("subgraph edge " + std::to_string(idx) + " leaves the subgraph");
    }
    input.edges.push_back({s->second, d->second, to_eigen(edge_vecs[idx])});
  }
  return input;
}

namespace detail {

Vec concat(std::initializer_list<const Vec*> parts) {
  Eigen::Index total = 0;
  for (const Vec* p : parts) total += p->size();
  Vec out(total);
  Eigen::Index at = 0;
  for (const Vec* p : parts) {
    out.segment(at, p->size()) = *p;
    at += p->size();
  }
  return out;
}

double safe_cosine(const Vec& a, const Vec& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

void check_graph(const GraphInput& graph, const Vec& q, const EncoderParams& params) {
  const auto d_in = static_cast<Eigen::Index>(params.dims.d_in);
  if (q.size() != d_in) throw UsageError("query dimension does not match encoder d_in");
  if (graph.node_features.empty()) throw UsageError("cannot encode an empty subgraph");
  for (const auto& z : graph.node_features) {
    if (z.size() != d_in) throw UsageError("node feature dimension does not match encoder d_in");
  }
  for (const auto& e : graph.edges) {
    if (e.features.size() != d_in) {
      throw UsageError("edge feature dimension does not match encoder d_in");
    }
    if (e.src >= graph.node_features.size() || e.dst >= graph.node_features.size()) {
      throw UsageError("edge endpoint outside the subgraph");
    }
    if (e.src == e.dst) throw UsageError("self-loops are not supported");
  }
}

std::vector<Orientation> orientations(const GraphInput& graph) {
  std::vector<Orientation> out;
  out.reserve(2 * graph.edges.size());
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    out.push_back({graph.edges[e].src, graph.edges[e].dst, e});
    out.push_back({graph.edges[e].dst, graph.edges[e].src, e});
  }
  return out;
}

EncodeTrace encode_traced(const GraphInput& graph, const Vec& q, const EncoderParams& params) {
  check_graph(graph, q, params);
  const std::size_t n = graph.node_features.size();
  EncodeTrace t;
  t.orientations = orientations(graph);
  t.degree.assign(n, 0.0);
  for (const auto& o : t.orientations) t.degree[o.dst] += 1.0;
  t.gamma.reserve(graph.edges.size());
  for (const auto& e : graph.edges) {
    t.gamma.push_back(params.gamma.apply(concat({&e.features, &q}))[0]);
  }

  t.states.resize(params.layers.size() + 1);
  t.states[0].reserve(n);
  for (const auto& z : graph.node_features) t.states[0].push_back(params.lift.apply(z));

  t.zeta.resize(params.layers.size());
  t.messages.resize(params.layers.size());
  const auto h = static_cast<Eigen::Index>(params.dims.d_hidden);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const GnnLayer& layer = params.layers[l];
    const auto& in = t.states[l];
    std::vector<Vec> out(n, Vec::Zero(h));
    t.zeta[l].reserve(t.orientations.size());
    t.messages[l].reserve(t.orientations.size());
    for (const auto& o : t.orientations) {
      const Vec& z_e = graph.edges[o.edge].features;
      const double a = layer.alpha.apply(concat({&in[o.src], &q}))[0];
      const double b = layer.beta.apply(concat({&in[o.dst], &q}))[0];
      const double zeta = std::tanh(a + t.gamma[o.edge] - b);
      Vec msg = layer.msg.apply(concat({&in[o.src], &in[o.dst], &z_e, &q}));
      out[o.dst] += zeta * msg;
      t.zeta[l].push_back(zeta);
      t.messages[l].push_back(std::move(msg));
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (t.degree[j] == 0.0) {
        out[j] = in[j];
      } else {
        out[j] /= t.degree[j];
      }
    }
    t.states[l + 1] = std::move(out);
  }

  t.z_s = Vec::Zero(h);
  for (const auto& s : t.states.back()) t.z_s += s;
  t.z_s /= static_cast<double>(n);
  return t;
}

ExampleTrace example_traced(const EncoderExample& example, const EncoderParams& params,
                            const SurrogateHead* head) {
  ExampleTrace t;
  t.current = encode_traced(example.graph, example.query, params);
  std::vector<Vec> demo_z;
  demo_z.reserve(example.demos.size());
  for (const auto& d : example.demos) {
    t.demos.push_back(encode_traced(d, example.query, params));
    demo_z.push_back(t.demos.back().z_s);
  }
  t.query_key = params.query_proj.apply(example.query);
  t.fusion = fuse_demonstrations(t.current.z_s, demo_z, example.query, params);
  t.hidden = params.proj_hidden.apply(t.fusion.z_final).array().tanh().matrix();
  t.p_graph = params.proj_out.apply(t.hidden);
  if (head) {
    if (head->out.in() != params.dims.d_llm) {
      throw UsageError("surrogate head input does not match encoder d_llm");
    }
    t.logits = head->out.apply(t.p_graph);
  }
  return t;
}

}  // namespace detail

double edge_gate(const Vec& state_i, const Vec& state_j, const Vec& edge_features, const Vec& q,
                 const EncoderParams& params, std::size_t layer) {
  if (layer >= params.layers.size()) throw UsageError("layer index out of range");
  const auto h = static_cast<Eigen::Index>(params.dims.d_hidden);
  const auto d_in = static_cast<Eigen::Index>(params.dims.d_in);
  if (state_i.size() != h || state_j.size() != h || edge_features.size() != d_in ||
      q.size() != d_in) {
    throw UsageError("edge_gate: dimension mismatch");
  }
  const GnnLayer& l = params.layers[layer];
  const double a = l.alpha.apply(detail::concat({&state_i, &q}))[0];
  const double b = l.beta.apply(detail::concat({&state_j, &q}))[0];
  const double g = params.gamma.apply(detail::concat({&edge_features, &q}))[0];
  return std::tanh(a + g - b);
}

std::vector<Vec> layer_forward(const std::vector<Vec>& states, const GraphInput& graph,
                               const Vec& q, const EncoderParams& params, std::size_t layer) {
  if (layer >= params.layers.size()) throw UsageError("layer index out of range");
  detail::check_graph(graph, q, params);
  const std::size_t n = graph.node_features.size();
  if (states.size() != n) throw UsageError("missing node state");
  const auto h = static_cast<Eigen::Index>(params.dims.d_hidden);
  for (const auto& s : states) {
    if (s.size() != h) throw UsageError("node state dimension does not match d_hidden");
  }
  const GnnLayer& l = params.layers[layer];
  std::vector<Vec> out(n, Vec::Zero(h));
  std::vector<double> degree(n, 0.0);
  for (const auto& o : detail::orientations(graph)) {
    const Vec& z_e = graph.edges[o.edge].features;
    const double zeta = edge_gate(states[o.src], states[o.dst], z_e, q, params, layer);
    out[o.dst] += zeta * l.msg.apply(detail::concat({&states[o.src], &states[o.dst], &z_e, &q}));
    degree[o.dst] += 1.0;
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (degree[j] == 0.0) {
      out[j] = states[j];
    } else {
      out[j] /= degree[j];
    }
  }
  return out;
}

Vec project(const Vec& z, const EncoderParams& params) {
  const Vec hidden = params.proj_hidden.apply(z).array().tanh().matrix();
  return params.proj_out.apply(hidden);
}

SubgraphEmbedding encode_subgraph(const GraphInput& graph, const Vec& q,
                                  const EncoderParams& params) {
  detail::EncodeTrace t = detail::encode_traced(graph, q, params);
  SubgraphEmbedding out;
  out.p_graph = project(t.z_s, params);
  out.z_s = std::move(t.z_s);
  out.node_states = std::move(t.states.back());
  return out;
}

std::vector<double> softmax(std::span<const double> scores) {
  if (scores.empty()) return {};
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> w(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    w[i] = std::exp(scores[i] - top);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

FusionResult fuse_demonstrations(const Vec& z_current, std::span<const Vec> demo_embeddings,
                                 const Vec& q, const EncoderParams& params) {
  const auto h = static_cast<Eigen::Index>(params.dims.d_hidden);
  if (z_current.size() != h) throw UsageError("fusion: embedding dimension mismatch");
  for (const auto& z : demo_embeddings) {
    if (z.size() != h) throw UsageError("fusion: embedding dimension mismatch");
  }
  if (q.size() != static_cast<Eigen::Index>(params.dims.d_in)) {
    throw UsageError("fusion: query dimension mismatch");
  }
  FusionResult r;
  if (demo_embeddings.empty()) {
    r.scores = {0.0};
    r.weights = {1.0};
    r.z_final = z_current;
    return r;
  }
  const Vec key = params.query_proj.apply(q);
  r.scores.push_back(detail::safe_cosine(key, z_current));
  for (const auto& z : demo_embeddings) r.scores.push_back(detail::safe_cosine(key, z));
  r.weights = softmax(r.scores);
  r.z_final = r.weights[0] * z_current;
  for (std::size_t d = 0; d < demo_embeddings.size(); ++d) {
    r.z_final += r.weights[d + 1] * demo_embeddings[d];
  }
  return r;
}

Vec graph_prompt(const EncoderExample& example, const EncoderParams& params,
                 FusionResult* fusion) {
  detail::ExampleTrace t = detail::example_traced(example, params, nullptr);
  if (fusion) *fusion = std::move(t.fusion);
  return t.p_graph;
}

double forward_loss(std::span<const EncoderExample> batch, const EncoderParams& params,
                    const SurrogateHead& head) {
  if (batch.empty()) throw UsageError("forward_loss: empty batch");
  double total = 0.0;
  for (const auto& ex : batch) {
    if (ex.label >= head.vocab.size()) {
      throw UsageError("label " + std::to_string(ex.label) + " outside the answer vocabulary");
    }
    const detail::ExampleTrace t = detail::example_traced(ex, params, &head);
    const double top = t.logits.maxCoeff();
    const double lse = top + std::log((t.logits.array() - top).exp().sum());
    total += lse - t.logits[static_cast<Eigen::Index>(ex.label)];
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace mixdemo
