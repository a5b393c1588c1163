#include "mixdemo/mixdemo.h"

#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "mixdemo/config.hpp"
#include "mixdemo/error.hpp"
#include "mixdemo/pipeline.hpp"

using nlohmann::json;
using namespace mixdemo;

struct mixdemo_context {
  PipelineConfig config;
  std::mutex mu;
  std::shared_ptr<const Pipeline> pipeline;

  std::shared_ptr<const Pipeline> get() {
    std::lock_guard lock(mu);
    if (!pipeline) pipeline = std::make_shared<const Pipeline>(config);
    return pipeline;
  }
};

namespace {

thread_local std::string g_last_error;

mixdemo_status status_of(ErrorKind kind) { return static_cast<mixdemo_status>(kind); }

template <typename F>
mixdemo_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return MIXDEMO_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return MIXDEMO_ERR_INTERNAL;
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (!p) throw UsageError(std::string(what) + " must not be NULL");
}

void emit(char** out, const json& j) {
  if (out) *out = dup(j.dump());
}

}  // namespace

extern "C" {

const char* mixdemo_version(void) { return "0.1.0"; }

const char* mixdemo_last_error(void) { return g_last_error.c_str(); }

void mixdemo_string_free(char* s) { std::free(s); }

mixdemo_status mixdemo_context_create(const char* config_json, mixdemo_context** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    auto ctx = std::make_unique<mixdemo_context>();
    if (config_json && *config_json) ctx->config = config_from_json(config_json);
    apply_environment(ctx->config);
    ctx->config.validate();
    *out = ctx.release();
  });
}

void mixdemo_context_destroy(mixdemo_context* ctx) { delete ctx; }

mixdemo_status mixdemo_ingest(mixdemo_context* ctx, const char* dataset_path,
                              const char* out_path, char** result_json) {
  return guarded([&] {
    require(ctx, "ctx");
    require(dataset_path, "dataset_path");
    const auto examples = load_dataset(dataset_path);
    std::size_t nodes = 0;
    std::size_t edges = 0;
    for (const auto& ex : examples) {
      nodes += ex.graph->nodes().size();
      edges += ex.graph->edges().size();
    }
    if (out_path) save_dataset(out_path, examples);
    emit(result_json, {{"examples", examples.size()}, {"nodes", nodes}, {"edges", edges}});
  });
}

mixdemo_status mixdemo_embed(mixdemo_context* ctx, const char* dataset_path,
                             const char* cache_path, char** result_json) {
  return guarded([&] {
    require(ctx, "ctx");
    require(dataset_path, "dataset_path");
    require(cache_path, "cache_path");
    const auto examples = load_dataset(dataset_path);
    auto inner = make_embedder(ctx->config.embedding);
    std::shared_ptr<EmbeddingCache> cache;
    if (std::ifstream(cache_path)) {
      cache = EmbeddingCache::load(cache_path);
    } else {
      cache = std::make_shared<EmbeddingCache>(inner->identifier(), inner->dim());
    }
    CachingEmbedder embedder(inner, cache);
    std::vector<std::string> texts;
    for (const auto& ex : examples) {
      texts.push_back(ex.question);
      for (const auto& n : ex.graph->nodes()) texts.push_back(n.text);
      for (const auto& e : ex.graph->edges()) texts.push_back(e.text);
    }
    embed_texts(embedder, texts);
    cache->save(cache_path);
    emit(result_json, {{"texts", texts.size()},
                       {"cached", cache->size()},
                       {"provider", inner->identifier()}});
  });
}

mixdemo_status mixdemo_retrieve(mixdemo_context* ctx, const char* dataset_path,
                                const char* example_id, char** result_json) {
  return guarded([&] {
    require(ctx, "ctx");
    require(dataset_path, "dataset_path");
    const auto examples = load_dataset(dataset_path);
    const QaExample* ex = nullptr;
    for (const auto& e : examples) {
      if (!example_id || e.id == example_id) {
        ex = &e;
        break;
      }
    }
    if (!ex) {
      throw UsageError(example_id ? "no example with id " + std::string(example_id)
                                  : std::string("dataset is empty"));
    }
    auto embedder = make_embedder(ctx->config.embedding);
    const GraphEmbeddings emb = embed_graph(*ex->graph, *embedder);
    const std::vector<std::string> question{ex->question};
    const Vector q = embed_texts(*embedder, question).front();
    const RetrievalResult r =
        retrieve_subgraph(ex->graph, q, emb.nodes, emb.edges, ctx->config.retrieval);
    json out = json::parse(retrieval_trace_json(r));
    out["id"] = ex->id;
    out["text"] = textualize(r.subgraph);
    emit(result_json, out);
  });
}

mixdemo_status mixdemo_cluster_demos(mixdemo_context* ctx, const char* pool_path, double lambda,
                                     size_t c_max, const char* out_path, char** result_json) {
  return guarded([&] {
    require(ctx, "ctx");
    require(pool_path, "pool_path");
    PipelineConfig cfg = ctx->config;
    cfg.demos.pool = pool_path;
    cfg.demos.cluster_model.clear();
    cfg.demos.lambda = lambda > 0.0 ? std::optional<double>(lambda) : std::nullopt;
    cfg.demos.c_max = c_max > 0 ? std::optional<std::size_t>(c_max) : std::nullopt;
    cfg.encoder.checkpoint.clear();
    const Pipeline p(cfg);
    const ClusterModel& model = *p.clusters();
    if (out_path) save_cluster_model(out_path, model);
    json out = json::parse(cluster_model_to_json(model));
    out["scan"] = model.scan;
    emit(result_json, out);
  });
}

mixdemo_status mixdemo_train(mixdemo_context* ctx, const char* dataset_path, size_t epochs,
                             double lr, uint64_t seed, const char* out_path, char** result_json) {
  return guarded([&] {
    require(ctx, "ctx");
    require(dataset_path, "dataset_path");
    require(out_path, "out_path");
    const auto examples = load_dataset(dataset_path);
    if (examples.empty()) throw UsageError("training dataset is empty");
    std::vector<std::string> vocab;
    for (const auto& ex : examples) vocab.push_back(ex.answers.front());
    std::sort(vocab.begin(), vocab.end());
    vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());

    PipelineConfig cfg = ctx->config;
    cfg.encoder.checkpoint.clear();
    const Pipeline p(cfg);
    std::vector<EncoderExample> data;
    for (const auto& ex : examples) {
      const auto label = static_cast<std::size_t>(
          std::lower_bound(vocab.begin(), vocab.end(), ex.answers.front()) - vocab.begin());
      data.push_back(p.encoder_example(ex, label));
    }
    const EncoderDims dims{cfg.embedding.dim, cfg.encoder.d_hidden, cfg.encoder.d_llm,
                           cfg.encoder.layers};
    TrainOptions opts;
    opts.lr = lr;
    opts.epochs = epochs;
    opts.seed = seed;
    TrainResult r = train_encoder(data, init_params(dims, seed),
                                  init_head(dims.d_llm, vocab, seed + 1), opts);
    save_checkpoint(out_path, r.params, &r.head, seed);
    emit(result_json, {{"initial_loss", r.initial_loss},
                       {"curve", r.curve},
                       {"vocab", vocab},
                       {"checkpoint", out_path}});
  });
}

mixdemo_status mixdemo_gradcheck(uint64_t seed, double eps, char** result_json) {
  return guarded([&] {
    const GradCheckFixture f = standard_gradcheck_fixture(seed);
    const GradCheckReport r = grad_check(f.batch, f.params, f.head, eps);
    emit(result_json, {{"seed", seed},
                       {"eps", eps},
                       {"max_rel_error", r.max_rel_error},
                       {"worst_tensor", r.worst_tensor},
                       {"coordinates", r.coordinates}});
  });
}

mixdemo_status mixdemo_answer(mixdemo_context* ctx, const char* example_json,
                              char** result_json) {
  return guarded([&] {
    require(ctx, "ctx");
    require(example_json, "example_json");
    std::istringstream in(example_json);
    const auto examples = parse_dataset(in, "<example>");
    if (examples.size() != 1) throw UsageError("expected exactly one example");
    const auto pipeline = ctx->get();
    const AnswerResult r = pipeline->answer(examples.front());
    pipeline->save_embedding_cache();
    emit(result_json, {{"id", r.id},
                       {"answer", r.generation.answer},
                       {"provider", r.generation.provider},
                       {"prompt_chars", r.generation.prompt_chars},
                       {"trace_digest", r.trace_digest},
                       {"trace", json::parse(r.trace_json)}});
  });
}

mixdemo_status mixdemo_evaluate(mixdemo_context* ctx, const char* dataset_path,
                                const char* metric, size_t concurrency,
                                const char* manifest_path, char** report_json) {
  return guarded([&] {
    require(ctx, "ctx");
    require(dataset_path, "dataset_path");
    const Metric m = parse_metric(metric ? metric : "accuracy");
    const auto examples = load_dataset(dataset_path);
    const auto pipeline = ctx->get();
    const EvaluationResult r = pipeline->evaluate(examples, m, concurrency);
    pipeline->save_embedding_cache();
    if (manifest_path) {
      std::ofstream out(manifest_path);
      if (!out) throw UsageError(std::string("cannot write manifest ") + manifest_path);
      out << r.manifest.to_json(&r.report, 2) << '\n';
    }
    if (report_json) *report_json = dup(report_to_json(r.report));
  });
}

}  // extern "C"
