#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixdemo/embedding.hpp"
#include "mixdemo/graph_store.hpp"

namespace mixdemo {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

Vec to_eigen(const Vector& v);
Vector from_eigen(const Vec& v);

struct EncoderDims {
  std::size_t d_in = 64;
  std::size_t d_hidden = 64;
  std::size_t d_llm = 128;
  std::size_t layers = 3;

  void check() const;
  bool operator==(const EncoderDims&) const = default;
};

// y = weight * x + bias
struct Linear {
  Mat weight;
  Vec bias;

  Linear() = default;
  Linear(std::size_t out, std::size_t in) : weight(Mat::Zero(out, in)), bias(Vec::Zero(out)) {}

  Vec apply(const Vec& x) const { return weight * x + bias; }
  std::size_t in() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out() const { return static_cast<std::size_t>(weight.rows()); }
};

struct GnnLayer {
  Linear alpha;  // [state_i ; q] -> scalar
  Linear beta;   // [state_j ; q] -> scalar
  Linear msg;    // [state_i ; state_j ; z_e ; q] -> d_hidden
};

struct EncoderParams {
  EncoderDims dims;
  Linear lift;        // z_v -> initial state
  std::vector<GnnLayer> layers;
  Linear gamma;       // [z_e ; q] -> scalar, shared by all layers
  Linear query_proj;  // q -> d_hidden, scores demonstrations during fusion
  Linear proj_hidden; // projector MLP: d_hidden -> d_llm, tanh
  Linear proj_out;    // d_llm -> d_llm

  // Zero-filled parameters of the right shapes.
  static EncoderParams zeros(const EncoderDims& dims);
};

// Stand-in for the frozen LLM during training: logits = weight * p_graph + bias.
struct SurrogateHead {
  Linear out;
  std::vector<std::string> vocab;

  static SurrogateHead zeros(std::size_t d_llm, std::vector<std::string> vocab);
};

// Named, flat view of one parameter tensor (row-major).
struct TensorView {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<double> data;
};

std::vector<TensorView> tensors(EncoderParams& params);
std::vector<TensorView> tensors(SurrogateHead& head);

/// Weights uniform in [-s, s] with s = sqrt(6 / (fan_in + fan_out)), biases
/// zero. Draws follow the tensors() order from one seeded stream.
EncoderParams init_params(const EncoderDims& dims, std::uint64_t seed);
SurrogateHead init_head(std::size_t d_llm, std::vector<std::string> vocab, std::uint64_t seed);

// Encoder-level view of a subgraph: local node indices, undirected edges.
struct GraphInput {
  struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;
    Vec features;
  };
  std::vector<Vec> node_features;
  std::vector<Edge> edges;
};

/// Local node i is the i-th smallest id in the subgraph. node_vecs/edge_vecs
/// align with the parent graph's nodes()/edges().
GraphInput make_graph_input(const Subgraph& subgraph, std::span<const Vector> node_vecs,
                            std::span<const Vector> edge_vecs);

/// Query-conditioned gate for edge i->j at `layer`:
/// tanh(alpha(state_i, q) + gamma(z_e, q) - beta(state_j, q)).
double edge_gate(const Vec& state_i, const Vec& state_j, const Vec& edge_features, const Vec& q,
                 const EncoderParams& params, std::size_t layer);

/// One round of gated message passing. Each node averages gate * message over
/// its incident edge orientations; isolated nodes keep their state.
std::vector<Vec> layer_forward(const std::vector<Vec>& states, const GraphInput& graph,
                               const Vec& q, const EncoderParams& params, std::size_t layer);

struct SubgraphEmbedding {
  Vec z_s;         // mean of final node states
  Vec p_graph;     // projector(z_s)
  std::vector<Vec> node_states;
};

SubgraphEmbedding encode_subgraph(const GraphInput& graph, const Vec& q,
                                  const EncoderParams& params);

Vec project(const Vec& z, const EncoderParams& params);

struct FusionResult {
  std::vector<double> scores;   // s(q, z_d), index 0 is the current subgraph
  std::vector<double> weights;  // softmax of scores
  Vec z_final;
};

/// Softmax relevance weighting of the current subgraph embedding and the
/// demonstration embeddings; the score is the cosine between
/// query_proj(q) and each embedding (0 when either has zero norm).
FusionResult fuse_demonstrations(const Vec& z_current, std::span<const Vec> demo_embeddings,
                                 const Vec& q, const EncoderParams& params);
std::vector<double> softmax(std::span<const double> scores);

struct EncoderExample {
  GraphInput graph;
  Vec query;
  std::vector<GraphInput> demos;  // encoded under the same query
  std::size_t label = 0;          // index into the head vocabulary
};

// Graph prompt for one example: encode, fuse, project.
Vec graph_prompt(const EncoderExample& example, const EncoderParams& params,
                 FusionResult* fusion = nullptr);

/// Mean cross-entropy of head(graph_prompt) over the batch.
double forward_loss(std::span<const EncoderExample> batch, const EncoderParams& params,
                    const SurrogateHead& head);

struct Gradients {
  EncoderParams encoder;
  SurrogateHead head;
  double loss = 0.0;
};

/// Exact reverse-mode gradients of forward_loss.
Gradients backward(std::span<const EncoderExample> batch, const EncoderParams& params,
                   const SurrogateHead& head);

enum class GradCheckScope { kAll, kHeadOnly };

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t coordinates = 0;
};

/// Central differences against backward(). Tensors with more than
/// kDenseCheckLimit entries are checked on a seeded 5% sample.
inline constexpr std::size_t kDenseCheckLimit = 4096;
GradCheckReport grad_check(std::span<const EncoderExample> batch, const EncoderParams& params,
                           const SurrogateHead& head, double eps,
                           GradCheckScope scope = GradCheckScope::kAll,
                           std::uint64_t sample_seed = 0);

// Small seeded instance for gradient checks: d_in 4, d_hidden 8, d_llm 8,
// 3 layers, subgraphs of at most 4 nodes, one demonstration, 3-way head.
struct GradCheckFixture {
  std::vector<EncoderExample> batch;
  EncoderParams params;
  SurrogateHead head;
};
GradCheckFixture standard_gradcheck_fixture(std::uint64_t seed);

struct TrainOptions {
  double lr = 0.05;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  bool train_head = true;
};

struct TrainResult {
  EncoderParams params;
  SurrogateHead head;
  double initial_loss = 0.0;
  std::vector<double> curve;  // full-dataset loss after each epoch
};

/// Per-example gradient descent over a seeded shuffle each epoch.
TrainResult train_encoder(std::span<const EncoderExample> dataset, EncoderParams params,
                          SurrogateHead head, const TrainOptions& options);

// Checkpoint: {"dims", "seed", "tensors": {name: {"shape", "data"}}, "format_version": 1}.
// The head, when present, is stored as "head.*" tensors plus a "vocab" list.
void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params,
                     const SurrogateHead* head, std::uint64_t seed);
struct Checkpoint {
  EncoderParams params;
  std::optional<SurrogateHead> head;
  std::uint64_t seed = 0;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_json(const EncoderParams& params, const SurrogateHead* head,
                               std::uint64_t seed);
Checkpoint checkpoint_from_json(const std::string& text);

}  // namespace mixdemo
