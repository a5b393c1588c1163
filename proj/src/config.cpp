#include "mixdemo/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mixdemo/error.hpp"

namespace mixdemo {

using nlohmann::json;

namespace {

void only_keys(const json& obj, const std::string& where, std::set<std::string> allowed) {
  if (!obj.is_object()) throw UsageError("config: " + where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw UsageError("config: unknown key '" + where + key + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError("config: '" + where + key + "' has the wrong type");
  }
}

}  // namespace

void PipelineConfig::validate() const {
  auto fail = [](const std::string& msg) { throw UsageError("config: " + msg); };
  if (embedding.provider != "hash" && embedding.provider != "remote") {
    fail("embedding.provider must be hash or remote");
  }
  if (embedding.dim < 2 || embedding.dim > 65536) fail("embedding.dim must be in [2, 65536]");
  if (embedding.provider == "remote" && embedding.url.empty()) fail("embedding.url is required");
  if (embedding.max_in_flight < 1 || embedding.max_in_flight > 256) {
    fail("embedding.max_in_flight must be in [1, 256]");
  }
  if (embedding.timeout_secs < 1) fail("embedding.timeout_secs must be positive");
  if (llm.provider != "stub" && llm.provider != "remote") fail("llm.provider must be stub or remote");
  if (llm.provider == "remote" && llm.url.empty()) fail("llm.url is required");
  if (llm.timeout_secs < 1) fail("llm.timeout_secs must be positive");
  if (llm.max_tokens < 1) fail("llm.max_tokens must be positive");
  if (llm.max_in_flight < 1 || llm.max_in_flight > 256) fail("llm.max_in_flight must be in [1, 256]");
  if (retrieval.k_nodes < 1) fail("retrieval.k_nodes must be >= 1");
  if (retrieval.k_edges < 1) fail("retrieval.k_edges must be >= 1");
  if (!(retrieval.edge_cost > 0.0) || !std::isfinite(retrieval.edge_cost)) {
    fail("retrieval.edge_cost must be positive");
  }
  if (demos.lambda && (!(*demos.lambda > 0.0) || !std::isfinite(*demos.lambda))) {
    fail("demos.lambda must be positive");
  }
  if (demos.c_max && *demos.c_max < 1) fail("demos.c_max must be >= 1");
  if (demos.m > 64) fail("demos.m must be in [0, 64]");
  if (encoder.layers < 1 || encoder.layers > 16) fail("encoder.layers must be in [1, 16]");
  if (encoder.d_hidden < 1 || encoder.d_hidden > 4096) fail("encoder.d_hidden must be in [1, 4096]");
  if (encoder.d_llm < 1 || encoder.d_llm > 8192) fail("encoder.d_llm must be in [1, 8192]");
  if (budget_chars < 1) fail("budget_chars must be positive");
  if (concurrency < 1 || concurrency > 256) fail("concurrency must be in [1, 256]");
}

PipelineConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: malformed JSON: ") + e.what());
  }
  only_keys(j, "", {"embedding", "llm", "retrieval", "demos", "encoder", "budget_chars", "seed",
                    "concurrency"});
  PipelineConfig c;
  read(j, "budget_chars", c.budget_chars, "");
  read(j, "seed", c.seed, "");
  read(j, "concurrency", c.concurrency, "");
  if (j.contains("embedding")) {
    const json& e = j["embedding"];
    only_keys(e, "embedding.",
              {"provider", "dim", "seed", "url", "max_in_flight", "timeout_secs", "cache_path"});
    read(e, "provider", c.embedding.provider, "embedding.");
    read(e, "dim", c.embedding.dim, "embedding.");
    read(e, "seed", c.embedding.seed, "embedding.");
    read(e, "url", c.embedding.url, "embedding.");
    read(e, "max_in_flight", c.embedding.max_in_flight, "embedding.");
    read(e, "timeout_secs", c.embedding.timeout_secs, "embedding.");
    read(e, "cache_path", c.embedding.cache_path, "embedding.");
  }
  if (j.contains("llm")) {
    const json& l = j["llm"];
    only_keys(l, "llm.", {"provider", "url", "timeout_secs", "max_tokens", "max_in_flight"});
    read(l, "provider", c.llm.provider, "llm.");
    read(l, "url", c.llm.url, "llm.");
    read(l, "timeout_secs", c.llm.timeout_secs, "llm.");
    read(l, "max_tokens", c.llm.max_tokens, "llm.");
    read(l, "max_in_flight", c.llm.max_in_flight, "llm.");
  }
  if (j.contains("retrieval")) {
    const json& r = j["retrieval"];
    only_keys(r, "retrieval.", {"k_nodes", "k_edges", "edge_cost"});
    read(r, "k_nodes", c.retrieval.k_nodes, "retrieval.");
    read(r, "k_edges", c.retrieval.k_edges, "retrieval.");
    read(r, "edge_cost", c.retrieval.edge_cost, "retrieval.");
  }
  if (j.contains("demos")) {
    const json& d = j["demos"];
    only_keys(d, "demos.", {"pool", "cluster_model", "lambda", "c_max", "m"});
    read(d, "pool", c.demos.pool, "demos.");
    read(d, "cluster_model", c.demos.cluster_model, "demos.");
    if (d.contains("lambda") && !d["lambda"].is_null()) {
      double v = 0.0;
      read(d, "lambda", v, "demos.");
      c.demos.lambda = v;
    }
    if (d.contains("c_max") && !d["c_max"].is_null()) {
      std::size_t v = 0;
      read(d, "c_max", v, "demos.");
      c.demos.c_max = v;
    }
    read(d, "m", c.demos.m, "demos.");
  }
  if (j.contains("encoder")) {
    const json& e = j["encoder"];
    only_keys(e, "encoder.", {"layers", "d_hidden", "d_llm", "checkpoint"});
    read(e, "layers", c.encoder.layers, "encoder.");
    read(e, "d_hidden", c.encoder.d_hidden, "encoder.");
    read(e, "d_llm", c.encoder.d_llm, "encoder.");
    read(e, "checkpoint", c.encoder.checkpoint, "encoder.");
  }
  c.validate();
  return c;
}

std::string config_to_json(const PipelineConfig& c, int indent) {
  json j;
  j["seed"] = c.seed;
  j["budget_chars"] = c.budget_chars;
  j["concurrency"] = c.concurrency;
  j["embedding"] = {{"provider", c.embedding.provider},
                    {"dim", c.embedding.dim},
                    {"seed", c.embedding.seed},
                    {"url", c.embedding.url},
                    {"max_in_flight", c.embedding.max_in_flight},
                    {"timeout_secs", c.embedding.timeout_secs},
                    {"cache_path", c.embedding.cache_path}};
  j["llm"] = {{"provider", c.llm.provider},
              {"url", c.llm.url},
              {"timeout_secs", c.llm.timeout_secs},
              {"max_tokens", c.llm.max_tokens},
              {"max_in_flight", c.llm.max_in_flight}};
  j["retrieval"] = {{"k_nodes", c.retrieval.k_nodes},
                    {"k_edges", c.retrieval.k_edges},
                    {"edge_cost", c.retrieval.edge_cost}};
  j["demos"] = {{"pool", c.demos.pool},
                {"cluster_model", c.demos.cluster_model},
                {"lambda", c.demos.lambda ? json(*c.demos.lambda) : json(nullptr)},
                {"c_max", c.demos.c_max ? json(*c.demos.c_max) : json(nullptr)},
                {"m", c.demos.m}};
  j["encoder"] = {{"layers", c.encoder.layers},
                  {"d_hidden", c.encoder.d_hidden},
                  {"d_llm", c.encoder.d_llm},
                  {"checkpoint", c.encoder.checkpoint}};
  return j.dump(indent);
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config file not found: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  PipelineConfig config = config_from_json(buf.str());
  // Relative file paths are taken relative to the config file.
  const auto base = std::filesystem::absolute(path).parent_path();
  for (std::string* p : {&config.demos.pool, &config.demos.cluster_model,
                         &config.encoder.checkpoint, &config.embedding.cache_path}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).string();
  }
  return config;
}

void apply_environment(PipelineConfig& config) {
  if (const char* url = std::getenv("MIXDEMO_EMBED_URL"); url && *url) config.embedding.url = url;
  if (const char* url = std::getenv("MIXDEMO_LLM_URL"); url && *url) config.llm.url = url;
}

}  // namespace mixdemo
