#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixdemo/config.hpp"
#include "mixdemo/demo_experts.hpp"
#include "mixdemo/embedding.hpp"
#include "mixdemo/encoder.hpp"
#include "mixdemo/graph_store.hpp"
#include "mixdemo/llm.hpp"
#include "mixdemo/metrics.hpp"
#include "mixdemo/pcst.hpp"

namespace mixdemo {

struct GraphEmbeddings {
  std::vector<Vector> nodes;  // aligned with graph.nodes()
  std::vector<Vector> edges;  // aligned with graph.edges()
};

GraphEmbeddings embed_graph(const TextualGraph& graph, const EmbeddingProvider& embedder);

// Prizes, rankings, chosen elements and objective as a JSON object.
std::string retrieval_trace_json(const RetrievalResult& result);

std::shared_ptr<EmbeddingProvider> make_embedder(const EmbeddingConfig& config);

struct AnswerResult {
  std::string id;
  GenerationResult generation;
  std::string trace_json;    // per-stage outputs, no timestamps
  std::string trace_digest;  // sha256 of trace_json
};

struct RunManifest {
  std::string config_json;
  std::uint64_t seed = 0;
  std::string embedding_provider;
  std::string llm_provider;
  std::string started_at;   // UTC, ISO 8601
  std::string finished_at;
  std::vector<std::string> traces;  // ordered like the dataset; "null" for failed examples

  std::string to_json(const MetricReport* report = nullptr, int indent = -1) const;
};

struct EvaluationResult {
  MetricReport report;
  RunManifest manifest;
};

// The config snapshot stored in a manifest, for replay.
PipelineConfig config_from_manifest(const std::string& manifest_json);

/// Everything a run needs, built once from a config: embedder, encoder
/// weights, prepared demonstration pool and its cluster model, generator.
/// answer() and evaluate() are safe to call concurrently.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);
  Pipeline(PipelineConfig config, std::shared_ptr<const EmbeddingProvider> embedder,
           std::shared_ptr<const LlmProvider> llm);

  const PipelineConfig& config() const { return config_; }
  const EncoderParams& encoder() const { return params_; }
  const DemoPool& pool() const { return pool_; }
  const std::optional<ClusterModel>& clusters() const { return clusters_; }
  const EmbeddingProvider& embedder() const { return *embedder_; }

  AnswerResult answer(const QaExample& example) const;

  /// Runs answer() per example on up to `concurrency` threads (0 means the
  /// configured bound). Failed examples become "error" verdicts; throws the
  /// first failure only when every example failed.
  EvaluationResult evaluate(std::span<const QaExample> dataset, Metric metric,
                            std::size_t concurrency = 0) const;

  /// Encoder training view of an example: retrieved subgraph, selected
  /// demonstrations and query embedding, with the given label.
  EncoderExample encoder_example(const QaExample& example, std::size_t label) const;

  // Writes the embedding cache when embedding.cache_path is set.
  void save_embedding_cache() const;

 private:
  struct Prepared;
  struct PoolEntry {
    GraphInput input;
  };

  void load_pool();
  Prepared prepare(const QaExample& example) const;

  PipelineConfig config_;
  std::shared_ptr<EmbeddingCache> cache_;
  std::shared_ptr<const EmbeddingProvider> embedder_;
  std::shared_ptr<const LlmProvider> llm_;  // null: per-example stub vocabulary
  EncoderParams params_;
  DemoPool pool_;
  std::vector<PoolEntry> pool_inputs_;
  std::optional<ClusterModel> clusters_;
};

}  // namespace mixdemo
