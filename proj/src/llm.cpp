#include "mixdemo/llm.hpp"

#include <cctype>
#include <cmath>
#include <semaphore>

#include <httplib.h>
#include <json.hpp>

#include "mixdemo/digest.hpp"
#include "mixdemo/error.hpp"

namespace mixdemo {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || u >= 0x80;
}

std::size_t count_words(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t count = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + 1)) {
    const std::size_t end = pos + needle.size();
    const bool left = pos == 0 || !word_char(haystack[pos - 1]);
    const bool right = end == haystack.size() || !word_char(haystack[end]);
    if (left && right) ++count;
  }
  return count;
}

std::string demo_answer_lines(std::string_view p_demo) {
  constexpr std::string_view kPrefix = "answer: ";
  std::string out;
  std::size_t start = 0;
  while (start < p_demo.size()) {
    std::size_t end = p_demo.find('\n', start);
    if (end == std::string_view::npos) end = p_demo.size();
    std::string_view line = p_demo.substr(start, end - start);
    if (line.starts_with(kPrefix)) {
      out.append(line.substr(kPrefix.size()));
      out += '\n';
    }
    start = end + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

class RemoteLlmProvider final : public LlmProvider {
 public:
  explicit RemoteLlmProvider(RemoteLlmOptions options)
      : options_(std::move(options)),
        slots_(static_cast<std::ptrdiff_t>(options_.max_in_flight)) {}

  std::string identifier() const override { return "remote:" + options_.url; }
  bool supports_soft_prompt() const override { return false; }

  std::string complete(const PromptBundle&, const std::string& text) const override {
    const std::string body =
        nlohmann::json{{"prompt", text}, {"max_tokens", options_.max_tokens}}.dump();
    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};

    httplib::Client client(options_.url);
    client.set_connection_timeout(options_.timeout_secs, 0);
    client.set_read_timeout(options_.timeout_secs, 0);
    client.set_write_timeout(options_.timeout_secs, 0);
    auto res = client.Post("/generate", body, "application/json");
    if (!res) {
      throw ProviderError("generation provider " + options_.url +
                          " failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw ProviderError("generation provider " + options_.url + " returned HTTP " +
                              std::to_string(res->status),
                          res->status);
    }
    try {
      return nlohmann::json::parse(res->body).at("text").get<std::string>();
    } catch (const std::exception& e) {
      throw ProviderError(std::string("malformed generation response: ") + e.what(), 200);
    }
  }

 private:
  RemoteLlmOptions options_;
  mutable std::counting_semaphore<> slots_;
};

}  // namespace

std::string render_demos(std::span<const Demonstration> demos, int budget_chars) {
  if (budget_chars <= 0) throw UsageError("budget_chars must be positive");
  std::vector<std::string> blocks;
  blocks.reserve(demos.size());
  std::size_t total = 0;
  for (const auto& d : demos) {
    std::string b = "graph:\n" + textualize(d.subgraph) + "\nquestion: " + d.example.question +
                    "\nanswer: " + (d.example.answers.empty() ? "" : d.example.answers.front()) +
                    "\n---\n";
    total += b.size();
    blocks.push_back(std::move(b));
  }
  const auto budget = static_cast<std::size_t>(budget_chars);
  while (!blocks.empty() && total > budget) {
    total -= blocks.back().size();
    blocks.pop_back();
  }
  std::string out;
  out.reserve(total);
  for (const auto& b : blocks) out += b;
  return out;
}

PromptBundle assemble_prompt(std::span<const Demonstration> demos, const Vector& graph_prompt,
                             const Subgraph& subgraph, const std::string& question,
                             int budget_chars) {
  if (trim(question).empty()) throw UsageError("question must not be empty");
  PromptBundle b;
  b.instruction = std::string(kInstruction);
  b.p_demo = render_demos(demos, budget_chars);
  b.p_graph = graph_prompt;
  b.p_text_graph = textualize(subgraph);
  b.question = question;
  return b;
}

std::string render_text_prompt(const PromptBundle& bundle) {
  std::string out;
  for (const std::string* part :
       {&bundle.instruction, &bundle.p_demo, &bundle.p_text_graph, &bundle.question}) {
    if (part->empty()) continue;
    if (!out.empty()) out += "\n\n";
    out += *part;
  }
  return out;
}

std::string stub_generate(const PromptBundle& bundle, std::span<const std::string> vocab,
                          std::uint64_t seed) {
  if (vocab.empty()) throw UsageError("stub vocabulary must not be empty");
  std::uint64_t soft = mix64(seed);
  for (double x : bundle.p_graph.values()) {
    soft = mix64(soft ^ static_cast<std::uint64_t>(std::llround(x * 1e6)));
  }
  const std::string text = lower(bundle.p_text_graph);
  const std::string answers = lower(demo_answer_lines(bundle.p_demo));

  std::size_t best = 0;
  std::size_t best_count = 0;
  std::uint64_t best_hash = 0;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const std::string needle = lower(vocab[i]);
    const std::size_t count = count_words(text, needle) + count_words(answers, needle);
    const std::uint64_t h = mix64(fnv1a64(vocab[i]) ^ soft);
    if (i == 0 || count > best_count || (count == best_count && h > best_hash)) {
      best = i;
      best_count = count;
      best_hash = h;
    }
  }
  return vocab[best];
}

StubLlmProvider::StubLlmProvider(std::vector<std::string> vocab, std::uint64_t seed)
    : vocab_(std::move(vocab)), seed_(seed) {
  if (vocab_.empty()) throw UsageError("stub vocabulary must not be empty");
}

std::string StubLlmProvider::complete(const PromptBundle& bundle, const std::string&) const {
  return stub_generate(bundle, vocab_, seed_);
}

std::shared_ptr<LlmProvider> make_remote_llm_provider(RemoteLlmOptions options) {
  if (options.url.empty()) throw UsageError("remote generation provider needs a URL");
  if (options.timeout_secs <= 0) throw UsageError("timeout_secs must be positive");
  if (options.max_tokens <= 0) throw UsageError("max_tokens must be positive");
  if (options.max_in_flight == 0) throw UsageError("max_in_flight must be >= 1");
  return std::make_shared<RemoteLlmProvider>(std::move(options));
}

GenerationResult generate(const LlmProvider& provider, const PromptBundle& bundle) {
  if (trim(bundle.question).empty()) throw UsageError("question must not be empty");
  const std::string text = render_text_prompt(bundle);
  GenerationResult r;
  r.provider = provider.identifier();
  r.prompt_chars = text.size();
  r.answer = std::string(trim(provider.complete(bundle, text)));
  if (r.answer.empty()) throw ProviderError("provider " + r.provider + " returned an empty answer");
  return r;
}

}  // namespace mixdemo
