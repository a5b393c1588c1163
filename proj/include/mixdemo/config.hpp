#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "mixdemo/pcst.hpp"

namespace mixdemo {

struct EmbeddingConfig {
  std::string provider = "hash";  // hash | remote
  std::size_t dim = 64;
  std::uint64_t seed = 0;         // hash provider only
  std::string url;
  std::size_t max_in_flight = 4;
  int timeout_secs = 60;
  std::string cache_path;         // optional persistent cache
};

struct LlmConfig {
  std::string provider = "stub";  // stub | remote
  std::string url;
  int timeout_secs = 60;
  int max_tokens = 64;
  std::size_t max_in_flight = 4;
};

struct DemoConfig {
  std::string pool;               // dataset file of solved examples; empty = zero-shot
  std::string cluster_model;      // optional saved model; clustered on load otherwise
  std::optional<double> lambda;   // default_lambda(pool) when unset
  std::optional<std::size_t> c_max;
  std::size_t m = 2;
};

struct EncoderConfig {
  std::size_t layers = 3;
  std::size_t d_hidden = 64;
  std::size_t d_llm = 128;
  std::string checkpoint;         // seeded untrained weights when empty
};

struct PipelineConfig {
  EmbeddingConfig embedding;
  LlmConfig llm;
  RetrievalParams retrieval;
  DemoConfig demos;
  EncoderConfig encoder;
  int budget_chars = 8000;
  std::uint64_t seed = 7;
  std::size_t concurrency = 1;

  // Throws UsageError naming the first out-of-range field.
  void validate() const;
};

/// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig config_from_json(const std::string& text);
std::string config_to_json(const PipelineConfig& config, int indent = -1);
// Relative pool, cluster model, checkpoint and cache paths resolve against
// the directory of the config file.
PipelineConfig load_config(const std::filesystem::path& path);

// MIXDEMO_EMBED_URL / MIXDEMO_LLM_URL override the endpoint URLs when set.
void apply_environment(PipelineConfig& config);

}  // namespace mixdemo
