#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mixdemo {

// Dense embedding. A default-constructed Vector is an empty placeholder;
// anything built from values has dim >= 1 and only finite entries.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::vector<double> values);

  std::size_t dim() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double norm() const;

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> values_;
};

double dot(const Vector& a, const Vector& b);
Vector scaled(const Vector& v, double s);

/// Cosine similarity clamped to [-1, 1]. Throws UsageError on a dimension
/// mismatch or a zero-norm input.
double cosine(const Vector& a, const Vector& b);

struct Ranked {
  std::int64_t key = 0;
  double score = 0.0;

  bool operator==(const Ranked&) const = default;
};

using Candidate = std::pair<std::int64_t, Vector>;

// At most k entries by descending cosine; equal scores ordered by key.
std::vector<Ranked> top_k(const Vector& query, std::span<const Candidate> candidates,
                          std::size_t k);

/// Feature-hashing embedder: tokens are maximal runs of ASCII alphanumerics
/// (or non-ASCII bytes), lowercased, each hashed to a bucket with a seeded
/// +-1 sign. The sum is L2-normalized; a text with no tokens maps to e_0.
Vector hash_embed(std::string_view text, std::size_t dim, std::uint64_t seed);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::string identifier() const = 0;
  virtual std::size_t dim() const = 0;
  // Must be deterministic and safe to call concurrently.
  virtual std::vector<Vector> embed(std::span<const std::string> texts) const = 0;
};

class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  HashEmbeddingProvider(std::size_t dim, std::uint64_t seed);

  std::string identifier() const override;
  std::size_t dim() const override { return dim_; }
  std::vector<Vector> embed(std::span<const std::string> texts) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Calls the provider and checks the contract: non-empty input, one vector
/// per text, each of provider.dim().
std::vector<Vector> embed_texts(const EmbeddingProvider& provider,
                                std::span<const std::string> texts);

// Thread-safe store of vectors keyed by SHA-256 of the text, scoped to one
// provider identifier and dimension.
class EmbeddingCache {
 public:
  EmbeddingCache(std::string provider, std::size_t dim);

  const std::string& provider() const { return provider_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const;

  std::optional<Vector> find(std::string_view text) const;
  void insert(std::string_view text, const Vector& v);

  // Header line {"provider","dim","count"} then per record a hex digest line
  // followed by dim little-endian doubles. Records are written in digest order.
  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<EmbeddingCache> load(const std::filesystem::path& path);

 private:
  std::string provider_;
  std::size_t dim_;
  mutable std::mutex mu_;
  std::map<std::string, Vector> by_digest_;
};

// Provider decorator that serves repeated texts from a cache.
class CachingEmbedder final : public EmbeddingProvider {
 public:
  CachingEmbedder(std::shared_ptr<const EmbeddingProvider> inner,
                  std::shared_ptr<EmbeddingCache> cache);

  std::string identifier() const override { return inner_->identifier(); }
  std::size_t dim() const override { return inner_->dim(); }
  std::vector<Vector> embed(std::span<const std::string> texts) const override;

  const EmbeddingCache& cache() const { return *cache_; }

 private:
  std::shared_ptr<const EmbeddingProvider> inner_;
  std::shared_ptr<EmbeddingCache> cache_;
};

struct RemoteEmbeddingOptions {
  std::string url;  // scheme://host:port
  std::size_t dim = 0;
  std::size_t max_in_flight = 4;
  int max_retries = 3;
  int initial_backoff_ms = 100;
  int timeout_secs = 60;
};

/// HTTP provider: POST /embed {"texts": [...]} -> {"vectors": [[...], ...]}.
/// Transport failures and 429/5xx are retried with exponential backoff; any
/// final non-200 status is a ProviderError.
std::shared_ptr<EmbeddingProvider> make_remote_embedding_provider(RemoteEmbeddingOptions options);

}  // namespace mixdemo
