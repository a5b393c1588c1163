#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mixdemo/embedding.hpp"
#include "mixdemo/graph_store.hpp"

namespace mixdemo {

inline constexpr std::string_view kInstruction =
    "You are given demonstrations and a knowledge subgraph written as node and edge lists. "
    "Answer the final question with the answer text only.";

inline constexpr int kDefaultBudgetChars = 8000;

// Parts in prompt order: instruction, p_demo, p_graph, p_text_graph, question.
struct PromptBundle {
  std::string instruction;
  std::string p_demo;
  Vector p_graph;
  std::string p_text_graph;
  std::string question;
};

struct GenerationResult {
  std::string answer;
  std::string provider;
  std::size_t prompt_chars = 0;
};

/// "graph:\n<S_i>\nquestion: <q_i>\nanswer: <a_i[0]>\n---\n" per demo. Whole
/// demos are dropped from the end until the block fits budget_chars.
std::string render_demos(std::span<const Demonstration> demos, int budget_chars);

PromptBundle assemble_prompt(std::span<const Demonstration> demos, const Vector& graph_prompt,
                             const Subgraph& subgraph, const std::string& question,
                             int budget_chars = kDefaultBudgetChars);

// Text parts joined by a blank line, empty parts skipped. p_graph never appears.
std::string render_text_prompt(const PromptBundle& bundle);

class LlmProvider {
 public:
  virtual ~LlmProvider() = default;

  virtual std::string identifier() const = 0;
  virtual bool supports_soft_prompt() const = 0;
  // `text` is render_text_prompt(bundle). Safe to call concurrently.
  virtual std::string complete(const PromptBundle& bundle, const std::string& text) const = 0;
};

/// Counts whole-word, case-insensitive occurrences of each vocab entry in
/// p_text_graph and in the "answer:" lines of p_demo. The highest count wins;
/// ties go to the larger seeded hash of (p_graph rounded to 1e-6, entry).
std::string stub_generate(const PromptBundle& bundle, std::span<const std::string> vocab,
                          std::uint64_t seed);

// In-process, soft-prompt-capable stand-in for a frozen LLM.
class StubLlmProvider final : public LlmProvider {
 public:
  StubLlmProvider(std::vector<std::string> vocab, std::uint64_t seed);

  std::string identifier() const override { return "stub-s" + std::to_string(seed_); }
  bool supports_soft_prompt() const override { return true; }
  std::string complete(const PromptBundle& bundle, const std::string& text) const override;

  const std::vector<std::string>& vocab() const { return vocab_; }

 private:
  std::vector<std::string> vocab_;
  std::uint64_t seed_;
};

struct RemoteLlmOptions {
  std::string url;  // scheme://host:port
  int timeout_secs = 60;
  int max_tokens = 64;
  std::size_t max_in_flight = 4;
};

/// HTTP provider: POST /generate {"prompt", "max_tokens"} -> {"text"}.
std::shared_ptr<LlmProvider> make_remote_llm_provider(RemoteLlmOptions options);

// Trimmed provider output; an empty answer is a ProviderError.
GenerationResult generate(const LlmProvider& provider, const PromptBundle& bundle);

}  // namespace mixdemo
