#include <doctest.h>

#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "mixdemo/error.hpp"
#include "mixdemo/llm.hpp"

using namespace mixdemo;

namespace {

GraphPtr tiny_graph() {
  return std::make_shared<const TextualGraph>(
      std::vector<TextNode>{{0, "mushroom"}, {1, "a cut peony"}},
      std::vector<TextEdge>{{1, 0, "is food for"}});
}

Demonstration demo(const std::string& question, const std::string& answer) {
  Demonstration d;
  d.example.question = question;
  d.example.answers = {answer};
  d.subgraph = whole_graph(tiny_graph());
  return d;
}

struct GenerateServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit GenerateServer(httplib::Server::Handler handler) {
    server.Post("/generate", std::move(handler));
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~GenerateServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_CASE("render_demos format") {
  const std::vector<Demonstration> demos{demo("What eats it?", "peony")};
  CHECK(render_demos(demos, 8000) ==
        "graph:\nnodes:\n0|mushroom\n1|a cut peony\nedges:\n1|is food for|0\n"
        "question: What eats it?\nanswer: peony\n---\n");
  CHECK(render_demos({}, 10).empty());
  CHECK_THROWS_AS(render_demos(demos, 0), UsageError);
}

TEST_CASE("render_demos drops whole demos from the end") {
  const std::vector<Demonstration> demos{demo("first?", "one"), demo("second?", "two")};
  const std::string both = render_demos(demos, 8000);
  const std::string first = render_demos(std::span(demos).first(1), 8000);
  CHECK(render_demos(demos, static_cast<int>(both.size())) == both);
  CHECK(render_demos(demos, static_cast<int>(both.size()) - 1) == first);
  CHECK(render_demos(demos, static_cast<int>(first.size()) - 1).empty());
}

TEST_CASE("assemble_prompt and the text rendering") {
  const std::vector<Demonstration> demos{demo("d?", "x")};
  const auto b = assemble_prompt(demos, Vector({0.5, 0.25}), whole_graph(tiny_graph()), "Q?");
  CHECK(b.instruction == kInstruction);
  CHECK(b.p_graph == Vector({0.5, 0.25}));
  const std::string text = render_text_prompt(b);
  const auto i_instr = text.find(kInstruction);
  const auto i_demo = text.find("graph:\n");
  const auto i_graph = text.find("---\n\n\nnodes:");
  const auto i_q = text.rfind("Q?");
  CHECK(i_instr == 0);
  CHECK(i_instr < i_demo);
  CHECK(i_demo < i_graph);
  CHECK(i_graph < i_q);
  CHECK(text.ends_with("\n\nQ?"));
  CHECK_THROWS_AS(assemble_prompt(demos, Vector({1.0}), whole_graph(tiny_graph()), "  "),
                  UsageError);
}

TEST_CASE("render_text_prompt skips empty parts") {
  PromptBundle b;
  b.question = "Q?";
  b.p_text_graph = "nodes:\nedges:\n";
  CHECK(render_text_prompt(b) == "nodes:\nedges:\n\n\nQ?");
}

TEST_CASE("stub picks the most mentioned vocabulary entry") {
  PromptBundle b;
  b.p_graph = Vector({0.1, 0.2});
  b.p_text_graph = "nodes:\n0|yes\n1|no\n2|No, no\nedges:\n";
  const std::vector<std::string> vocab{"yes", "no"};
  CHECK(stub_generate(b, vocab, 0) == "no");
  b.p_demo = "graph:\n...\nanswer: yes\n---\ngraph:\nanswer: yes\n---\n";
  CHECK(stub_generate(b, vocab, 0) == "yes");
  // "know" is not a whole-word "no".
  b.p_demo.clear();
  b.p_text_graph = "know known yes";
  CHECK(stub_generate(b, vocab, 0) == "yes");
  CHECK_THROWS_AS(stub_generate(b, std::vector<std::string>{}, 0), UsageError);
}

TEST_CASE("stub is deterministic and ties follow the graph prompt") {
  const std::vector<std::string> vocab{"yes", "no", "maybe"};
  PromptBundle b;
  b.p_graph = Vector({0.3, -0.7});
  const std::string first = stub_generate(b, vocab, 5);
  for (int i = 0; i < 5; ++i) CHECK(stub_generate(b, vocab, 5) == first);

  std::set<std::string> seen;
  for (int i = 0; i < 32; ++i) {
    b.p_graph = Vector({0.01 * i, 1.0});
    seen.insert(stub_generate(b, vocab, 5));
  }
  CHECK(seen.size() > 1);
}

TEST_CASE("generate trims and rejects empty answers") {
  struct Fixed final : LlmProvider {
    std::string out;
    std::string identifier() const override { return "fixed"; }
    bool supports_soft_prompt() const override { return false; }
    std::string complete(const PromptBundle&, const std::string&) const override { return out; }
  };
  PromptBundle b;
  b.question = "Q?";
  Fixed f;
  f.out = "  Paris \n";
  const auto r = generate(f, b);
  CHECK(r.answer == "Paris");
  CHECK(r.provider == "fixed");
  CHECK(r.prompt_chars == render_text_prompt(b).size());
  f.out = " \n";
  CHECK_THROWS_AS(generate(f, b), ProviderError);
}

TEST_CASE("remote generation provider") {
  SUBCASE("success") {
    GenerateServer s([](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      const bool ok = body.contains("prompt") && body["max_tokens"] == 16;
      res.set_content(nlohmann::json{{"text", ok ? " Rome" : "bad request"}}.dump(),
                      "application/json");
    });
    RemoteLlmOptions o;
    o.url = s.url();
    o.max_tokens = 16;
    auto p = make_remote_llm_provider(o);
    CHECK(!p->supports_soft_prompt());
    PromptBundle b;
    b.question = "capital of Italy?";
    CHECK(generate(*p, b).answer == "Rome");
  }
  SUBCASE("HTTP 500") {
    GenerateServer s([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    RemoteLlmOptions o;
    o.url = s.url();
    auto p = make_remote_llm_provider(o);
    PromptBundle b;
    b.question = "q";
    try {
      generate(*p, b);
      FAIL("expected a provider error");
    } catch (const ProviderError& e) {
      CHECK(e.status() == 500);
    }
  }
  SUBCASE("invalid options") {
    CHECK_THROWS_AS(make_remote_llm_provider({}), UsageError);
  }
}
