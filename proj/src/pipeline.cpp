#include "mixdemo/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <filesystem>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "mixdemo/digest.hpp"
#include "mixdemo/error.hpp"

namespace mixdemo {

using nlohmann::json;

namespace {

[[noreturn]] void rethrow_in(const char* stage, const Error& e) {
  const std::string what = std::string(stage) + ": " + e.what();
  switch (e.kind()) {
    case ErrorKind::kUsage:
      throw UsageError(what);
    case ErrorKind::kData:
      throw DataError(what);
    case ErrorKind::kProvider:
      throw ProviderError(what, static_cast<const ProviderError&>(e).status());
    case ErrorKind::kInternal:
      break;
  }
  throw Error(ErrorKind::kInternal, what);
}

template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    rethrow_in(name, e);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::kInternal, std::string(name) + ": " + e.what());
  }
}

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

GraphEmbeddings embed_graph(const TextualGraph& graph, const EmbeddingProvider& embedder) {
  GraphEmbeddings out;
  std::vector<std::string> texts;
  texts.reserve(graph.nodes().size());
  for (const auto& n : graph.nodes()) texts.push_back(n.text);
  if (!texts.empty()) out.nodes = embed_texts(embedder, texts);
  texts.clear();
  for (const auto& e : graph.edges()) texts.push_back(e.text);
  if (!texts.empty()) out.edges = embed_texts(embedder, texts);
  return out;
}

namespace {

json retrieval_json(const RetrievalResult& r) {
  auto ranking = [](const std::vector<Ranked>& rows) {
    json out = json::array();
    for (const auto& x : rows) out.push_back({x.key, x.score});
    return out;
  };
  json node_prizes = json::array();
  for (const auto& [id, p] : r.prizes.node_prizes) node_prizes.push_back({id, p});
  json edge_prizes = json::array();
  for (const auto& [idx, p] : r.prizes.edge_prizes) edge_prizes.push_back({idx, p});
  return {{"node_ranking", ranking(r.node_ranking)},
          {"edge_ranking", ranking(r.edge_ranking)},
          {"node_prizes", std::move(node_prizes)},
          {"edge_prizes", std::move(edge_prizes)},
          {"nodes", r.subgraph.node_ids},
          {"edges", r.subgraph.edge_indices},
          {"objective", r.solution.objective},
          {"fallback", r.fallback}};
}

}  // namespace

std::string retrieval_trace_json(const RetrievalResult& result) {
  return retrieval_json(result).dump();
}

std::shared_ptr<EmbeddingProvider> make_embedder(const EmbeddingConfig& config) {
  if (config.provider == "remote") {
    RemoteEmbeddingOptions o;
    o.url = config.url;
    o.dim = config.dim;
    o.max_in_flight = config.max_in_flight;
    o.timeout_secs = config.timeout_secs;
    return make_remote_embedding_provider(std::move(o));
  }
  if (config.provider == "hash") {
    return std::make_shared<HashEmbeddingProvider>(config.dim, config.seed);
  }
  throw UsageError("unknown embedding provider '" + config.provider + "'");
}

std::string RunManifest::to_json(const MetricReport* report, int indent) const {
  json traces_json = json::array();
  for (const auto& t : traces) traces_json.push_back(json::parse(t));
  json j = {{"config", json::parse(config_json)},
            {"seed", seed},
            {"providers", {{"embedding", embedding_provider}, {"llm", llm_provider}}},
            {"instruction", std::string(kInstruction)},
            {"started_at", started_at},
            {"finished_at", finished_at},
            {"traces", std::move(traces_json)}};
  if (report) j["report"] = json::parse(report_to_json(*report));
  return j.dump(indent);
}

PipelineConfig config_from_manifest(const std::string& manifest_json) {
  try {
    return config_from_json(json::parse(manifest_json).at("config").dump());
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed run manifest: ") + e.what());
  }
}

struct Pipeline::Prepared {
  RetrievalResult retrieval;
  GraphEmbeddings embeddings;
  Vector query;
  std::vector<std::size_t> demo_ids;
  EncoderExample encoder_input;
  json trace;
};

Pipeline::Pipeline(PipelineConfig config) : Pipeline(std::move(config), nullptr, nullptr) {}

Pipeline::Pipeline(PipelineConfig config, std::shared_ptr<const EmbeddingProvider> embedder,
                   std::shared_ptr<const LlmProvider> llm)
    : config_(std::move(config)) {
  config_.validate();
  if (!embedder) embedder = make_embedder(config_.embedding);
  if (embedder->dim() != config_.embedding.dim) {
    throw UsageError("embedding provider dim " + std::to_string(embedder->dim()) +
                     " differs from config embedding.dim " +
                     std::to_string(config_.embedding.dim));
  }
  const auto& cache_path = config_.embedding.cache_path;
  if (!cache_path.empty() && std::filesystem::exists(cache_path)) {
    cache_ = EmbeddingCache::load(cache_path);
  } else {
    cache_ = std::make_shared<EmbeddingCache>(embedder->identifier(), embedder->dim());
  }
  embedder_ = std::make_shared<CachingEmbedder>(std::move(embedder), cache_);

  if (!config_.encoder.checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(config_.encoder.checkpoint);
    if (ck.params.dims.d_in != config_.embedding.dim) {
      throw DataError("checkpoint " + config_.encoder.checkpoint + " expects d_in " +
                      std::to_string(ck.params.dims.d_in) + " but embeddings have dim " +
                      std::to_string(config_.embedding.dim));
    }
    params_ = std::move(ck.params);
  } else {
    params_ = init_params({config_.embedding.dim, config_.encoder.d_hidden, config_.encoder.d_llm,
                           config_.encoder.layers},
                          config_.seed);
  }

  load_pool();

  if (llm) {
    llm_ = std::move(llm);
  } else if (config_.llm.provider == "remote") {
    llm_ = make_remote_llm_provider({config_.llm.url, config_.llm.timeout_secs,
                                     config_.llm.max_tokens, config_.llm.max_in_flight});
  } else if (pool_.size() > 0) {
    std::vector<std::string> vocab;
    for (const auto& d : pool_.demos) {
      vocab.insert(vocab.end(), d.example.answers.begin(), d.example.answers.end());
    }
    llm_ = std::make_shared<StubLlmProvider>(sorted_unique(std::move(vocab)), config_.seed);
  }
}

void Pipeline::load_pool() {
  if (config_.demos.pool.empty()) return;
  const auto examples = load_dataset(config_.demos.pool);
  if (examples.empty()) throw DataError("demonstration pool " + config_.demos.pool + " is empty");
  std::vector<std::string> prompts;
  for (const auto& ex : examples) {
    const GraphEmbeddings emb = embed_graph(*ex.graph, *embedder_);
    const std::vector<std::string> question{ex.question};
    const Vector q = embed_texts(*embedder_, question).front();
    RetrievalResult r = retrieve_subgraph(ex.graph, q, emb.nodes, emb.edges, config_.retrieval);
    Demonstration demo{ex, r.subgraph, build_prompt_text(r.subgraph, ex.question)};
    pool_inputs_.push_back({make_graph_input(r.subgraph, emb.nodes, emb.edges)});
    prompts.push_back(demo.prompt_text);
    pool_.demos.push_back(std::move(demo));
  }
  pool_.prompt_vectors = embed_texts(*embedder_, prompts);

  if (!config_.demos.cluster_model.empty()) {
    ClusterModel model = load_cluster_model(config_.demos.cluster_model);
    if (model.assignments.size() != pool_.size() || model.dim() != config_.embedding.dim) {
      throw DataError("cluster model " + config_.demos.cluster_model +
                      " does not match the demonstration pool");
    }
    clusters_ = std::move(model);
    return;
  }
  double lambda = config_.demos.lambda.value_or(0.0);
  if (!config_.demos.lambda) lambda = std::max(default_lambda(pool_.prompt_vectors), 1e-12);
  const std::size_t c_max =
      std::min(config_.demos.c_max.value_or(default_c_max(pool_.size())), pool_.size());
  clusters_ = select_cluster_count(pool_.prompt_vectors, lambda, c_max, config_.seed);
}

Pipeline::Prepared Pipeline::prepare(const QaExample& example) const {
  if (!example.graph) throw UsageError("example " + example.id + " has no graph");
  Prepared p;
  p.trace["id"] = example.id;
  p.trace["question"] = example.question;

  stage("embed", [&] {
    p.embeddings = embed_graph(*example.graph, *embedder_);
    const std::vector<std::string> question{example.question};
    p.query = embed_texts(*embedder_, question).front();
    p.trace["embed"] = {{"provider", embedder_->identifier()},
                        {"nodes", p.embeddings.nodes.size()},
                        {"edges", p.embeddings.edges.size()}};
    return 0;
  });

  stage("retrieve", [&] {
    p.retrieval = retrieve_subgraph(example.graph, p.query, p.embeddings.nodes,
                                    p.embeddings.edges, config_.retrieval);
    p.trace["retrieve"] = retrieval_json(p.retrieval);
    return 0;
  });

  stage("route", [&] {
    if (!clusters_ || config_.demos.m == 0) {
      p.trace["route"] = nullptr;
      return 0;
    }
    const std::vector<std::string> prompt{build_prompt_text(p.retrieval.subgraph, example.question)};
    const Vector x = embed_texts(*embedder_, prompt).front();
    ExpertRoute r = route(x, *clusters_);
    p.demo_ids = select_demos(pool_, *clusters_, r, x, config_.demos.m);
    json ids = json::array();
    for (std::size_t i : p.demo_ids) ids.push_back(pool_.demos[i].example.id);
    p.trace["route"] = {{"cluster", r.cluster}, {"score", r.score}, {"demos", std::move(ids)}};
    return 0;
  });

  stage("encode", [&] {
    p.encoder_input.graph =
        make_graph_input(p.retrieval.subgraph, p.embeddings.nodes, p.embeddings.edges);
    p.encoder_input.query = to_eigen(p.query);
    for (std::size_t i : p.demo_ids) p.encoder_input.demos.push_back(pool_inputs_[i].input);
    return 0;
  });
  return p;
}

AnswerResult Pipeline::answer(const QaExample& example) const {
  Prepared p = prepare(example);

  const Vector p_graph = stage("encode", [&] {
    FusionResult fusion;
    const Vec out = graph_prompt(p.encoder_input, params_, &fusion);
    p.trace["encode"] = {{"fusion_weights", fusion.weights},
                         {"z_final", vec_json(fusion.z_final)},
                         {"p_graph", vec_json(out)}};
    return from_eigen(out);
  });

  const PromptBundle bundle = stage("prompt", [&] {
    std::vector<Demonstration> demos;
    for (std::size_t i : p.demo_ids) demos.push_back(pool_.demos[i]);
    PromptBundle b = assemble_prompt(demos, p_graph, p.retrieval.subgraph, example.question,
                                     config_.budget_chars);
    p.trace["prompt"] = {{"demo_chars", b.p_demo.size()},
                         {"text_graph", b.p_text_graph},
                         {"digest", sha256_hex(render_text_prompt(b))}};
    return b;
  });

  GenerationResult gen = stage("generate", [&] {
    if (llm_) return generate(*llm_, bundle);
    std::vector<std::string> vocab;
    for (NodeId id : p.retrieval.subgraph.node_ids) vocab.push_back(example.graph->node(id).text);
    return generate(StubLlmProvider(sorted_unique(std::move(vocab)), config_.seed), bundle);
  });
  p.trace["generate"] = {{"provider", gen.provider},
                         {"answer", gen.answer},
                         {"prompt_chars", gen.prompt_chars}};

  AnswerResult r;
  r.id = example.id;
  r.generation = std::move(gen);
  r.trace_json = p.trace.dump();
  r.trace_digest = sha256_hex(r.trace_json);
  return r;
}

EncoderExample Pipeline::encoder_example(const QaExample& example, std::size_t label) const {
  EncoderExample ex = prepare(example).encoder_input;
  ex.label = label;
  return ex;
}

EvaluationResult Pipeline::evaluate(std::span<const QaExample> dataset, Metric metric,
                                    std::size_t concurrency) const {
  if (dataset.empty()) throw UsageError("evaluate: dataset is empty");
  if (concurrency == 0) concurrency = config_.concurrency;
  concurrency = std::min(concurrency, dataset.size());

  EvaluationResult out;
  out.manifest.config_json = config_to_json(config_);
  out.manifest.seed = config_.seed;
  out.manifest.embedding_provider = embedder_->identifier();
  out.manifest.llm_provider = llm_ ? llm_->identifier() : "stub-s" + std::to_string(config_.seed);
  out.manifest.started_at = utc_now();

  std::vector<ExampleVerdict> verdicts(dataset.size());
  std::vector<std::string> traces(dataset.size(), "null");
  std::vector<std::exception_ptr> failures(dataset.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < dataset.size(); i = next++) {
      verdicts[i].id = dataset[i].id;
      try {
        AnswerResult r = answer(dataset[i]);
        verdicts[i].prediction = std::move(r.generation.answer);
        traces[i] = std::move(r.trace_json);
      } catch (const std::exception& e) {
        verdicts[i].error = e.what();
        failures[i] = std::current_exception();
      }
    }
  };
  if (concurrency <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (std::size_t t = 0; t < concurrency; ++t) threads.emplace_back(worker);
  }

  if (std::all_of(failures.begin(), failures.end(), [](const auto& f) { return bool(f); })) {
    std::rethrow_exception(failures.front());
  }
  std::vector<std::vector<std::string>> golds;
  golds.reserve(dataset.size());
  for (const auto& ex : dataset) golds.push_back(ex.answers);
  out.report = make_report(std::move(verdicts), golds, metric);
  out.manifest.traces = std::move(traces);
  out.manifest.finished_at = utc_now();
  return out;
}

void Pipeline::save_embedding_cache() const {
  if (!config_.embedding.cache_path.empty()) cache_->save(config_.embedding.cache_path);
}

}  // namespace mixdemo
