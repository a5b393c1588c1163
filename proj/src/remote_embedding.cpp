#include <chrono>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "mixdemo/embedding.hpp"
#include "mixdemo/error.hpp"

namespace mixdemo {

namespace {

class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(RemoteEmbeddingOptions options)
      : options_(std::move(options)),
        slots_(static_cast<std::ptrdiff_t>(options_.max_in_flight)) {}

  std::string identifier() const override { return "remote:" + options_.url; }
  std::size_t dim() const override { return options_.dim; }

  std::vector<Vector> embed(std::span<const std::string> texts) const override {
    nlohmann::json request = {{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
    const std::string body = request.dump();

    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};

    int backoff_ms = options_.initial_backoff_ms;
    std::string last_error;
    int last_status = 0;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
        backoff_ms *= 2;
      }
      httplib::Client client(options_.url);
      client.set_connection_timeout(options_.timeout_secs, 0);
      client.set_read_timeout(options_.timeout_secs, 0);
      auto res = client.Post("/embed", body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        last_status = 0;
        continue;
      }
      if (res->status == 200) return parse(res->body, texts.size());
      last_status = res->status;
      last_error = "HTTP " + std::to_string(res->status);
      if (res->status != 429 && res->status < 500) break;
    }
    throw ProviderError("embedding provider " + options_.url + " failed: " + last_error,
                        last_status);
  }

 private:
  std::vector<Vector> parse(const std::string& body, std::size_t expected) const {
    try {
      auto j = nlohmann::json::parse(body);
      const auto& rows = j.at("vectors");
      if (!rows.is_array() || rows.size() != expected) {
        throw ProviderError("embedding provider returned " + std::to_string(rows.size()) +
                            " vectors for " + std::to_string(expected) + " texts");
      }
      std::vector<Vector> out;
      out.reserve(rows.size());
      for (const auto& row : rows) {
        auto values = row.get<std::vector<double>>();
        if (values.size() != options_.dim) {
          throw ProviderError("dimension mismatch in provider response: expected " +
                              std::to_string(options_.dim) + ", got " +
                              std::to_string(values.size()));
        }
        out.emplace_back(std::move(values));
      }
      return out;
    } catch (const ProviderError&) {
      throw;
    } catch (const std::exception& e) {
      throw ProviderError(std::string("malformed embedding response: ") + e.what(), 200);
    }
  }

  RemoteEmbeddingOptions options_;
  mutable std::counting_semaphore<> slots_;
};

}  // namespace

std::shared_ptr<EmbeddingProvider> make_remote_embedding_provider(RemoteEmbeddingOptions options) {
  if (options.url.empty()) throw UsageError("remote embedding provider needs a URL");
  if (options.dim == 0) throw UsageError("remote embedding provider needs dim >= 1");
  if (options.max_in_flight == 0) throw UsageError("max_in_flight must be >= 1");
  return std::make_shared<RemoteEmbeddingProvider>(std::move(options));
}

}  // namespace mixdemo
