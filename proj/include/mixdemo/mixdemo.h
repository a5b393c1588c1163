/* C interface to the mixdemo library.
 *
 * Every call returns a mixdemo_status. On failure the message is available
 * from mixdemo_last_error() on the same thread until the next call.
 * Strings returned through `char** out` are owned by the caller and must be
 * released with mixdemo_string_free(). */
#ifndef MIXDEMO_H
#define MIXDEMO_H

#include <stddef.h>
#include <stdint.h>

#if defined(MIXDEMO_BUILDING_LIBRARY)
#define MIXDEMO_API __attribute__((visibility("default")))
#else
#define MIXDEMO_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mixdemo_status {
  MIXDEMO_OK = 0,
  MIXDEMO_ERR_USAGE = 1,
  MIXDEMO_ERR_DATA = 2,
  MIXDEMO_ERR_PROVIDER = 3,
  MIXDEMO_ERR_INTERNAL = 4
} mixdemo_status;

typedef struct mixdemo_context mixdemo_context;

MIXDEMO_API const char* mixdemo_version(void);
MIXDEMO_API const char* mixdemo_last_error(void);
MIXDEMO_API void mixdemo_string_free(char* s);

/* config_json may be NULL or "" for defaults. MIXDEMO_EMBED_URL and
 * MIXDEMO_LLM_URL override endpoint URLs. The pool, cluster model and
 * checkpoint are loaded lazily on first use. */
MIXDEMO_API mixdemo_status mixdemo_context_create(const char* config_json,
                                                  mixdemo_context** out);
MIXDEMO_API void mixdemo_context_destroy(mixdemo_context* ctx);

/* Validates a dataset file. Writes a normalized copy to out_path unless it is
 * NULL. Result: {"examples", "nodes", "edges"}. */
MIXDEMO_API mixdemo_status mixdemo_ingest(mixdemo_context* ctx, const char* dataset_path,
                                          const char* out_path, char** result_json);

/* Embeds every node, edge and question text of a dataset into the cache file. */
MIXDEMO_API mixdemo_status mixdemo_embed(mixdemo_context* ctx, const char* dataset_path,
                                         const char* cache_path, char** result_json);

/* Retrieval trace for one example (by id; NULL selects the first). */
MIXDEMO_API mixdemo_status mixdemo_retrieve(mixdemo_context* ctx, const char* dataset_path,
                                            const char* example_id, char** result_json);

/* Clusters the demonstration pool; lambda <= 0 and c_max == 0 select defaults.
 * Saves the model to out_path unless it is NULL. */
MIXDEMO_API mixdemo_status mixdemo_cluster_demos(mixdemo_context* ctx, const char* pool_path,
                                                 double lambda, size_t c_max,
                                                 const char* out_path, char** result_json);

/* Trains the encoder against a surrogate head over the dataset's answer
 * vocabulary and writes a checkpoint. Result holds the loss curve. */
MIXDEMO_API mixdemo_status mixdemo_train(mixdemo_context* ctx, const char* dataset_path,
                                         size_t epochs, double lr, uint64_t seed,
                                         const char* out_path, char** result_json);

/* Gradient check on the built-in small fixture. */
MIXDEMO_API mixdemo_status mixdemo_gradcheck(uint64_t seed, double eps, char** result_json);

/* Answers one example given as a JSON dataset line. Result:
 * {"id", "answer", "provider", "trace_digest", "trace"}. */
MIXDEMO_API mixdemo_status mixdemo_answer(mixdemo_context* ctx, const char* example_json,
                                          char** result_json);

/* metric: "accuracy" or "hit_at_1"; concurrency 0 uses the configured bound.
 * Writes the run manifest to manifest_path unless it is NULL. */
MIXDEMO_API mixdemo_status mixdemo_evaluate(mixdemo_context* ctx, const char* dataset_path,
                                            const char* metric, size_t concurrency,
                                            const char* manifest_path, char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* MIXDEMO_H */
