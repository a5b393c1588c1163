#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "encoder_internal.hpp"
#include "mixdemo/digest.hpp"
#include "mixdemo/error.hpp"

namespace mixdemo {

namespace {

void accumulate(Linear& grad, const Vec& dy, const Vec& x) {
  grad.weight.noalias() += dy * x.transpose();
  grad.bias += dy;
}

// Scalar-output linear map: returns the input gradient.
Vec scalar_backward(Linear& grad, const Linear& lin, double dy, const Vec& x) {
  grad.weight.row(0) += dy * x.transpose();
  grad.bias[0] += dy;
  return dy * lin.weight.row(0).transpose();
}

void encode_backward(const detail::EncodeTrace& t, const GraphInput& graph, const Vec& q,
                     const Vec& dz_s, const EncoderParams& params, EncoderParams& grad) {
  const std::size_t n = graph.node_features.size();
  const auto h = static_cast<Eigen::Index>(params.dims.d_hidden);
  const auto d_in = static_cast<Eigen::Index>(params.dims.d_in);
  std::vector<Vec> g(n, dz_s / static_cast<double>(n));
  std::vector<double> dgamma(graph.edges.size(), 0.0);

  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const GnnLayer& layer = params.layers[l];
    GnnLayer& glayer = grad.layers[l];
    const auto& in = t.states[l];
    std::vector<Vec> gin(n, Vec::Zero(h));
    for (std::size_t j = 0; j < n; ++j) {
      if (t.degree[j] == 0.0) gin[j] = g[j];
    }
    for (std::size_t k = 0; k < t.orientations.size(); ++k) {
      const auto& o = t.orientations[k];
      const Vec& z_e = graph.edges[o.edge].features;
      const double zeta = t.zeta[l][k];
      const Vec go = g[o.dst] / t.degree[o.dst];

      const Vec dm = zeta * go;
      const double dzeta = go.dot(t.messages[l][k]);
      const Vec x = detail::concat({&in[o.src], &in[o.dst], &z_e, &q});
      accumulate(glayer.msg, dm, x);
      const Vec dx = layer.msg.weight.transpose() * dm;
      gin[o.src] += dx.segment(0, h);
      gin[o.dst] += dx.segment(h, h);

      const double da = dzeta * (1.0 - zeta * zeta);
      gin[o.src] += scalar_backward(glayer.alpha, layer.alpha, da,
                                    detail::concat({&in[o.src], &q})).head(h);
      gin[o.dst] += scalar_backward(glayer.beta, layer.beta, -da,
                                    detail::concat({&in[o.dst], &q})).head(h);
      dgamma[o.edge] += da;
    }
    g = std::move(gin);
  }

  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    grad.gamma.weight.row(0).head(d_in) += dgamma[e] * graph.edges[e].features.transpose();
    grad.gamma.weight.row(0).tail(d_in) += dgamma[e] * q.transpose();
    grad.gamma.bias[0] += dgamma[e];
  }
  for (std::size_t j = 0; j < n; ++j) accumulate(grad.lift, g[j], graph.node_features[j]);
}

void example_backward(const EncoderExample& ex, const EncoderParams& params,
                      const SurrogateHead& head, double scale, Gradients& out) {
  const detail::ExampleTrace t = detail::example_traced(ex, params, &head);
  const double top = t.logits.maxCoeff();
  Vec prob = (t.logits.array() - top).exp().matrix();
  const double z = prob.sum();
  prob /= z;
  const auto label = static_cast<Eigen::Index>(ex.label);
  out.loss += scale * (top + std::log(z) - t.logits[label]);

  Vec dlogits = prob;
  dlogits[label] -= 1.0;
  dlogits *= scale;
  accumulate(out.head.out, dlogits, t.p_graph);
  const Vec dp = head.out.weight.transpose() * dlogits;

  accumulate(out.encoder.proj_out, dp, t.hidden);
  const Vec dh = params.proj_out.weight.transpose() * dp;
  const Vec da1 = (dh.array() * (1.0 - t.hidden.array().square())).matrix();
  accumulate(out.encoder.proj_hidden, da1, t.fusion.z_final);
  const Vec dz_final = params.proj_hidden.weight.transpose() * da1;

  if (ex.demos.empty()) {
    encode_backward(t.current, ex.graph, ex.query, dz_final, params, out.encoder);
    return;
  }

  std::vector<const Vec*> zs{&t.current.z_s};
  for (const auto& d : t.demos) zs.push_back(&d.z_s);
  const auto& w = t.fusion.weights;
  const auto& s = t.fusion.scores;
  std::vector<Vec> dz(zs.size());
  std::vector<double> dw(zs.size());
  double mean_dw = 0.0;
  for (std::size_t k = 0; k < zs.size(); ++k) {
    dz[k] = w[k] * dz_final;
    dw[k] = dz_final.dot(*zs[k]);
    mean_dw += w[k] * dw[k];
  }
  const Vec& u = t.query_key;
  const double nu = u.norm();
  Vec du = Vec::Zero(u.size());
  for (std::size_t k = 0; k < zs.size(); ++k) {
    const double ds = w[k] * (dw[k] - mean_dw);
    const double nz = zs[k]->norm();
    if (nu == 0.0 || nz == 0.0) continue;  // score pinned at 0
    du += ds * (*zs[k] / (nu * nz) - s[k] * u / (nu * nu));
    dz[k] += ds * (u / (nu * nz) - s[k] * *zs[k] / (nz * nz));
  }
  accumulate(out.encoder.query_proj, du, ex.query);

  encode_backward(t.current, ex.graph, ex.query, dz[0], params, out.encoder);
  for (std::size_t d = 0; d < ex.demos.size(); ++d) {
    encode_backward(t.demos[d], ex.demos[d], ex.query, dz[d + 1], params, out.encoder);
  }
}

void check_labels(std::span<const EncoderExample> batch, const SurrogateHead& head) {
  if (batch.empty()) throw UsageError("empty batch");
  for (const auto& ex : batch) {
    if (ex.label >= head.vocab.size()) {
      throw UsageError("label " + std::to_string(ex.label) + " outside the answer vocabulary");
    }
  }
}

}  // namespace

Gradients backward(std::span<const EncoderExample> batch, const EncoderParams& params,
                   const SurrogateHead& head) {
  check_labels(batch, head);
  Gradients out{EncoderParams::zeros(params.dims), SurrogateHead::zeros(head.out.in(), head.vocab),
                0.0};
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) example_backward(ex, params, head, scale, out);
  return out;
}

GradCheckReport grad_check(std::span<const EncoderExample> batch, const EncoderParams& params,
                           const SurrogateHead& head, double eps, GradCheckScope scope,
                           std::uint64_t sample_seed) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw UsageError("grad_check: eps must lie in (0, 1e-2]");
  check_labels(batch, head);
  Gradients analytic = backward(batch, params, head);

  EncoderParams p = params;
  SurrogateHead hd = head;
  std::vector<std::pair<TensorView, TensorView>> pairs;  // (live, analytic)
  {
    auto live_head = tensors(hd);
    auto grad_head = tensors(analytic.head);
    if (scope == GradCheckScope::kAll) {
      auto live = tensors(p);
      auto grad = tensors(analytic.encoder);
      for (std::size_t i = 0; i < live.size(); ++i) pairs.emplace_back(live[i], grad[i]);
    }
    for (std::size_t i = 0; i < live_head.size(); ++i) pairs.emplace_back(live_head[i], grad_head[i]);
  }

  std::mt19937_64 rng(sample_seed);
  GradCheckReport report;
  for (auto& [live, grad] : pairs) {
    std::vector<std::size_t> coords(live.data.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > kDenseCheckLimit) {
      const std::size_t keep = std::max<std::size_t>(1, coords.size() / 20);
      for (std::size_t i = 0; i < keep; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (coords.size() - i));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(keep);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t c : coords) {
      const double saved = live.data[c];
      live.data[c] = saved + eps;
      const double up = forward_loss(batch, p, hd);
      live.data[c] = saved - eps;
      const double down = forward_loss(batch, p, hd);
      live.data[c] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = grad.data[c];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (report.worst_tensor.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = live.name;
      }
      ++report.coordinates;
    }
  }
  return report;
}

GradCheckFixture standard_gradcheck_fixture(std::uint64_t seed) {
  const EncoderDims dims{4, 8, 8, 3};
  GradCheckFixture f{{}, init_params(dims, seed), init_head(dims.d_llm, {"a", "b", "c"}, seed + 1)};
  std::mt19937_64 rng(mix64(seed));
  auto vec = [&] {
    Vec v(static_cast<Eigen::Index>(dims.d_in));
    for (auto& x : v) x = 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0;
    return v;
  };
  auto graph = [&](std::size_t n, std::initializer_list<std::pair<std::size_t, std::size_t>> es) {
    GraphInput g;
    for (std::size_t i = 0; i < n; ++i) g.node_features.push_back(vec());
    for (auto [a, b] : es) g.edges.push_back({a, b, vec()});
    return g;
  };
  EncoderExample first{graph(4, {{0, 1}, {1, 2}, {2, 3}, {0, 2}}), vec(), {}, 1};
  first.demos.push_back(graph(3, {{0, 1}, {1, 2}}));
  f.batch.push_back(std::move(first));
  f.batch.push_back({graph(3, {{0, 1}}), vec(), {}, 2});
  return f;
}

TrainResult train_encoder(std::span<const EncoderExample> dataset, EncoderParams params,
                          SurrogateHead head, const TrainOptions& options) {
  if (!(options.lr >= 0.0) || !std::isfinite(options.lr)) {
    throw UsageError("learning rate must be a non-negative finite number");
  }
  check_labels(dataset, head);
  TrainResult result;
  result.initial_loss = forward_loss(dataset, params, head);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(options.seed);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    }
    for (std::size_t idx : order) {
      Gradients g = backward(dataset.subspan(idx, 1), params, head);
      auto live = tensors(params);
      auto grad = tensors(g.encoder);
      for (std::size_t t = 0; t < live.size(); ++t) {
        for (std::size_t c = 0; c < live[t].data.size(); ++c) {
          live[t].data[c] -= options.lr * grad[t].data[c];
        }
      }
      if (options.train_head) {
        head.out.weight -= options.lr * g.head.out.weight;
        head.out.bias -= options.lr * g.head.out.bias;
      }
    }
    const double loss = forward_loss(dataset, params, head);
    if (!std::isfinite(loss)) {
      throw UsageError("training diverged at epoch " + std::to_string(epoch + 1) +
                       " (loss is not finite); lower the learning rate");
    }
    result.curve.push_back(loss);
  }
  result.params = std::move(params);
  result.head = std::move(head);
  return result;
}

}  // namespace mixdemo
