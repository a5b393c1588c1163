// mixdemo command-line front end. Talks to the library only through mixdemo.h.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mixdemo/mixdemo.h"

using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool trace = false;
  std::optional<int> k_nodes;
  std::optional<int> k_edges;
  std::optional<double> edge_cost;
  std::optional<std::string> llm_url;
  bool stub = false;
  std::optional<int> budget_chars;
  std::optional<int> timeout_secs;
};

// Usage problems found before the library is involved.
struct CliUsage : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliUsage("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string config_json(const Globals& g) {
  json cfg = json::object();
  if (!g.config_path.empty()) {
    try {
      cfg = json::parse(read_file(g.config_path));
    } catch (const json::exception& e) {
      throw CliUsage("config " + g.config_path + ": " + e.what());
    }
    // Relative file paths in a config file are relative to that file.
    const auto base = std::filesystem::absolute(g.config_path).parent_path();
    const std::pair<const char*, const char*> file_keys[] = {
        {"demos", "pool"}, {"demos", "cluster_model"}, {"encoder", "checkpoint"},
        {"embedding", "cache_path"}};
    for (const auto& [section, key] : file_keys) {
      if (!cfg.is_object() || !cfg.contains(section) || !cfg[section].is_object()) continue;
      auto& v = cfg[section];
      if (!v.contains(key) || !v[key].is_string()) continue;
      const std::filesystem::path p = v[key].get<std::string>();
      if (!p.empty() && p.is_relative()) v[key] = (base / p).string();
    }
  }
  if (g.seed) cfg["seed"] = *g.seed;
  if (g.k_nodes) cfg["retrieval"]["k_nodes"] = *g.k_nodes;
  if (g.k_edges) cfg["retrieval"]["k_edges"] = *g.k_edges;
  if (g.edge_cost) cfg["retrieval"]["edge_cost"] = *g.edge_cost;
  if (g.budget_chars) cfg["budget_chars"] = *g.budget_chars;
  if (g.timeout_secs) cfg["llm"]["timeout_secs"] = *g.timeout_secs;
  if (g.stub) {
    cfg["llm"]["provider"] = "stub";
  } else if (g.llm_url) {
    cfg["llm"]["provider"] = "remote";
    cfg["llm"]["url"] = *g.llm_url;
  }
  return cfg.dump();
}

int fail(mixdemo_status s) {
  std::fprintf(stderr, "error: %s\n", mixdemo_last_error());
  return static_cast<int>(s);
}

// Prints the library's JSON result and frees it.
int finish(mixdemo_status s, char* const* out, int indent = 2) {
  if (s != MIXDEMO_OK) return fail(s);
  std::cout << json::parse(*out).dump(indent) << '\n';
  mixdemo_string_free(*out);
  return 0;
}

class Context {
 public:
  explicit Context(const Globals& g) {
    const std::string cfg = config_json(g);
    status_ = mixdemo_context_create(cfg.c_str(), &ctx_);
  }
  ~Context() { mixdemo_context_destroy(ctx_); }
  Context(const Context&) = delete;
  Context& operator=(const Context&) = delete;

  mixdemo_status status() const { return status_; }
  mixdemo_context* get() const { return ctx_; }

 private:
  mixdemo_context* ctx_ = nullptr;
  mixdemo_status status_ = MIXDEMO_OK;
};

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph QA with retrieved subgraphs and routed demonstrations"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--seed", g.seed, "Global seed");
  app.add_flag("--trace", g.trace, "Print per-stage traces");
  app.add_option("--k-nodes", g.k_nodes, "Top-k nodes that receive prizes");
  app.add_option("--k-edges", g.k_edges, "Top-k edges that receive prizes");
  app.add_option("--edge-cost", g.edge_cost, "Uniform edge cost");
  app.add_option("--llm-url", g.llm_url, "Remote generation endpoint");
  app.add_flag("--stub", g.stub, "Use the offline stub generator");
  app.add_option("--budget-chars", g.budget_chars, "Character budget for demonstrations");
  app.add_option("--timeout-secs", g.timeout_secs, "Generation request timeout");

  std::string dataset, out, cache, id, pool, metric = "accuracy", manifest, example;
  double lambda = 0.0, lr = 0.05, eps = 1e-5;
  std::size_t c_max = 0, epochs = 100, concurrency = 0;

  auto* ingest = app.add_subcommand("ingest", "Validate a dataset file");
  ingest->add_option("--dataset", dataset)->required();
  ingest->add_option("--out", out, "Write a normalized copy");

  auto* embed = app.add_subcommand("embed", "Embed dataset texts into a cache file");
  embed->add_option("--dataset", dataset)->required();
  embed->add_option("--cache", cache)->required();

  auto* retrieve = app.add_subcommand("retrieve", "Retrieve the subgraph for one example");
  retrieve->add_option("--dataset", dataset)->required();
  retrieve->add_option("--id", id, "Example id (default: first)");

  auto* cluster = app.add_subcommand("cluster-demos", "Cluster the demonstration pool");
  cluster->add_option("--pool", pool)->required();
  cluster->add_option("--lambda", lambda, "Cluster-count penalty (default: data-derived)");
  cluster->add_option("--c-max", c_max, "Largest cluster count scanned");
  cluster->add_option("--out", out, "Save the cluster model");

  auto* train = app.add_subcommand("train", "Train the graph encoder");
  train->add_option("--dataset", dataset)->required();
  train->add_option("--epochs", epochs);
  train->add_option("--lr", lr);
  train->add_option("--out", out)->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gradcheck->add_option("--eps", eps);

  auto* answer = app.add_subcommand("answer", "Answer one example");
  auto* ex_opt = answer->add_option("--example", example, "Example as a JSON line");
  auto* ds_opt = answer->add_option("--dataset", dataset, "Dataset file");
  answer->add_option("--id", id, "Example id within --dataset (default: first)");
  ex_opt->excludes(ds_opt);

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a dataset");
  evaluate->add_option("--dataset", dataset)->required();
  evaluate->add_option("--metric", metric)->check(CLI::IsMember({"accuracy", "hit_at_1"}));
  evaluate->add_option("--concurrency", concurrency);
  evaluate->add_option("--manifest", manifest, "Write the run manifest");
  evaluate->add_option("--out", out, "Write the metric report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gradcheck) {
      char* result = nullptr;
      return finish(mixdemo_gradcheck(g.seed.value_or(1), eps, &result), &result);
    }

    Context ctx(g);
    if (ctx.status() != MIXDEMO_OK) return fail(ctx.status());
    char* result = nullptr;

    if (*ingest) {
      return finish(mixdemo_ingest(ctx.get(), dataset.c_str(), opt(out), &result), &result);
    }
    if (*embed) {
      return finish(mixdemo_embed(ctx.get(), dataset.c_str(), cache.c_str(), &result), &result);
    }
    if (*retrieve) {
      return finish(mixdemo_retrieve(ctx.get(), dataset.c_str(), opt(id), &result), &result);
    }
    if (*cluster) {
      return finish(
          mixdemo_cluster_demos(ctx.get(), pool.c_str(), lambda, c_max, opt(out), &result),
          &result);
    }
    if (*train) {
      return finish(mixdemo_train(ctx.get(), dataset.c_str(), epochs, lr, g.seed.value_or(7),
                                  out.c_str(), &result),
                    &result);
    }
    if (*answer) {
      std::string line = example;
      if (line.empty()) {
        if (dataset.empty()) throw CliUsage("answer needs --example or --dataset");
        std::istringstream in(read_file(dataset));
        for (std::string row; std::getline(in, row);) {
          if (row.find_first_not_of(" \t\r") == std::string::npos) continue;
          json j;
          try {
            j = json::parse(row);
          } catch (const json::exception&) {
            line = row;  // let the library report it with context
            break;
          }
          if (id.empty() || (j.contains("id") && j["id"].is_string() && j["id"] == id)) {
            line = row;
            break;
          }
        }
        if (line.empty()) throw CliUsage("no example with id " + id);
      }
      const mixdemo_status s = mixdemo_answer(ctx.get(), line.c_str(), &result);
      if (s != MIXDEMO_OK) return fail(s);
      json r = json::parse(result);
      mixdemo_string_free(result);
      if (!g.trace) r.erase("trace");
      std::cout << r.dump(2) << '\n';
      return 0;
    }
    if (*evaluate) {
      const mixdemo_status s = mixdemo_evaluate(ctx.get(), dataset.c_str(), metric.c_str(),
                                                concurrency, opt(manifest), &result);
      if (s != MIXDEMO_OK) return fail(s);
      const std::string report = json::parse(result).dump(2);
      mixdemo_string_free(result);
      if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw CliUsage("cannot write " + out);
        f << report << '\n';
      }
      std::cout << report << '\n';
      return 0;
    }
  } catch (const CliUsage& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
