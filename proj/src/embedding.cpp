#include "mixdemo/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mixdemo/digest.hpp"
#include "mixdemo/error.hpp"

namespace mixdemo {

Vector::Vector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw UsageError("vector must have dim >= 1");
  for (double v : values_) {
    if (!std::isfinite(v)) throw DataError("vector contains a non-finite value");
  }
}

double Vector::norm() const { return std::sqrt(dot(*this, *this)); }

double dot(const Vector& a, const Vector& b) {
  if (a.dim() != b.dim()) {
    throw UsageError("dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                     std::to_string(b.dim()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

Vector scaled(const Vector& v, double s) {
  std::vector<double> out(v.values().begin(), v.values().end());
  for (double& x : out) x *= s;
  return Vector(std::move(out));
}

double cosine(const Vector& a, const Vector& b) {
  const double ab = dot(a, b);
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw UsageError("cosine of a zero-norm vector");
  return std::clamp(ab / (na * nb), -1.0, 1.0);
}

std::vector<Ranked> top_k(const Vector& query, std::span<const Candidate> candidates,
                          std::size_t k) {
  std::vector<Ranked> ranked;
  ranked.reserve(candidates.size());
  for (const auto& [key, vec] : candidates) ranked.push_back({key, cosine(query, vec)});
  auto by_rank = [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.key < b.key;
  };
  const std::size_t keep = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep),
                    ranked.end(), by_rank);
  ranked.resize(keep);
  return ranked;
}

Vector hash_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim < 2) throw UsageError("hash_embed requires dim >= 2");
  std::vector<double> acc(dim, 0.0);
  const std::uint64_t salt = mix64(seed);

  auto is_token_byte = [](unsigned char c) { return std::isalnum(c) || c >= 0x80; };
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    const std::uint64_t h = mix64(fnv1a64(token) ^ salt);
    const std::size_t bucket = static_cast<std::size_t>(h % dim);
    acc[bucket] += (mix64(h) >> 63) ? -1.0 : 1.0;
    token.clear();
  };
  for (unsigned char c : text) {
    if (is_token_byte(c)) {
      token.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else {
      flush();
    }
  }
  flush();

  double sq = 0.0;
  for (double v : acc) sq += v * v;
  if (sq == 0.0) {
    acc.assign(dim, 0.0);
    acc[0] = 1.0;
    return Vector(std::move(acc));
  }
  const double inv = 1.0 / std::sqrt(sq);
  for (double& v : acc) v *= inv;
  return Vector(std::move(acc));
}

HashEmbeddingProvider::HashEmbeddingProvider(std::size_t dim, std::uint64_t seed)
    : dim_(dim), seed_(seed) {
  if (dim < 2) throw UsageError("hash provider requires dim >= 2");
}

std::string HashEmbeddingProvider::identifier() const {
  return "hash-d" + std::to_string(dim_) + "-s" + std::to_string(seed_);
}

std::vector<Vector> HashEmbeddingProvider::embed(std::span<const std::string> texts) const {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(hash_embed(t, dim_, seed_));
  return out;
}

std::vector<Vector> embed_texts(const EmbeddingProvider& provider,
                                std::span<const std::string> texts) {
  if (texts.empty()) throw UsageError("embed_texts: empty input list");
  std::vector<Vector> out = provider.embed(texts);
  if (out.size() != texts.size()) {
    throw ProviderError("provider " + provider.identifier() + " returned " +
                        std::to_string(out.size()) + " vectors for " +
                        std::to_string(texts.size()) + " texts");
  }
  for (const auto& v : out) {
    if (v.dim() != provider.dim()) {
      throw ProviderError("dimension mismatch in provider response: expected " +
                          std::to_string(provider.dim()) + ", got " + std::to_string(v.dim()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cache

namespace {

void write_le_double(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

double read_le_double(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) throw DataError("truncated embedding cache");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

EmbeddingCache::EmbeddingCache(std::string provider, std::size_t dim)
    : provider_(std::move(provider)), dim_(dim) {}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mu_);
  return by_digest_.size();
}

std::optional<Vector> EmbeddingCache::find(std::string_view text) const {
  const std::string key = sha256_hex(text);
  std::lock_guard lock(mu_);
  auto it = by_digest_.find(key);
  if (it == by_digest_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::insert(std::string_view text, const Vector& v) {
  if (v.dim() != dim_) throw UsageError("cache dimension mismatch");
  std::string key = sha256_hex(text);
  std::lock_guard lock(mu_);
  by_digest_.insert_or_assign(std::move(key), v);
}

void EmbeddingCache::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embedding cache " + path.string());
  std::lock_guard lock(mu_);
  nlohmann::json header = {{"provider", provider_}, {"dim", dim_}, {"count", by_digest_.size()}};
  out << header.dump() << '\n';
  for (const auto& [digest, vec] : by_digest_) {
    out << digest << '\n';
    for (double x : vec.values()) write_le_double(out, x);
  }
  if (!out) throw DataError("failed writing embedding cache " + path.string());
}

std::unique_ptr<EmbeddingCache> EmbeddingCache::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding cache " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty embedding cache " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad embedding cache header: " + std::string(e.what()));
  }
  if (!header.contains("provider") || !header.contains("dim") || !header.contains("count")) {
    throw DataError("embedding cache header missing provider/dim/count");
  }
  auto cache = std::make_unique<EmbeddingCache>(header["provider"].get<std::string>(),
                                                header["dim"].get<std::size_t>());
  const auto count = header["count"].get<std::size_t>();
  for (std::size_t r = 0; r < count; ++r) {
    std::string digest;
    if (!std::getline(in, digest) || digest.size() != 64) {
      throw DataError("bad digest line in embedding cache record " + std::to_string(r));
    }
    std::vector<double> values(cache->dim_);
    for (double& v : values) v = read_le_double(in);
    cache->by_digest_.emplace(std::move(digest), Vector(std::move(values)));
  }
  return cache;
}

CachingEmbedder::CachingEmbedder(std::shared_ptr<const EmbeddingProvider> inner,
                                 std::shared_ptr<EmbeddingCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {
  if (cache_->provider() != inner_->identifier() || cache_->dim() != inner_->dim()) {
    throw DataError("embedding cache belongs to provider " + cache_->provider() +
                    " (dim " + std::to_string(cache_->dim()) + "), not " +
                    inner_->identifier());
  }
}

std::vector<Vector> CachingEmbedder::embed(std::span<const std::string> texts) const {
  std::vector<Vector> out(texts.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (auto hit = cache_->find(texts[i])) {
      out[i] = std::move(*hit);
    } else {
      missing.push_back(texts[i]);
      slots.push_back(i);
    }
  }
  if (!missing.empty()) {
    std::vector<Vector> fresh = embed_texts(*inner_, missing);
    for (std::size_t j = 0; j < fresh.size(); ++j) {
      cache_->insert(missing[j], fresh[j]);
      out[slots[j]] = std::move(fresh[j]);
    }
  }
  return out;
}

}  // namespace mixdemo
