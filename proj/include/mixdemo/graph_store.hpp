#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mixdemo {

using NodeId = std::int64_t;

struct TextNode {
  NodeId id = 0;
  std::string text;

  bool operator==(const TextNode&) const = default;
};

struct TextEdge {
  NodeId src = 0;
  NodeId dst = 0;
  std::string text;

  bool operator==(const TextEdge&) const = default;
};

// A graph whose nodes and edges carry free text. Immutable once built; an
// instance may hold invalid structure (see validate()), load_dataset never
// produces one.
class TextualGraph {
 public:
  TextualGraph() = default;
  TextualGraph(std::vector<TextNode> nodes, std::vector<TextEdge> edges,
               std::map<std::string, NodeId> aliases = {});

  const std::vector<TextNode>& nodes() const { return nodes_; }
  const std::vector<TextEdge>& edges() const { return edges_; }
  // Original string ids, when the source file used them.
  const std::map<std::string, NodeId>& aliases() const { return aliases_; }

  bool empty() const { return nodes_.empty(); }
  bool has_node(NodeId id) const { return index_.contains(id); }
  // Position of `id` in nodes(); first occurrence if ids are duplicated.
  std::optional<std::size_t> position(NodeId id) const;
  const TextNode& node(NodeId id) const;

  bool operator==(const TextualGraph& other) const {
    return nodes_ == other.nodes_ && edges_ == other.edges_;
  }

 private:
  std::vector<TextNode> nodes_;
  std::vector<TextEdge> edges_;
  std::map<std::string, NodeId> aliases_;
  std::unordered_map<NodeId, std::size_t> index_;
};

using GraphPtr = std::shared_ptr<const TextualGraph>;

struct Subgraph {
  GraphPtr parent;
  std::set<NodeId> node_ids;
  std::set<std::size_t> edge_indices;

  bool empty() const { return node_ids.empty(); }
};

// The whole graph viewed as a subgraph of itself.
Subgraph whole_graph(GraphPtr graph);

struct QaExample {
  std::string id;
  std::string question;
  std::vector<std::string> answers;
  GraphPtr graph;

  bool operator==(const QaExample& other) const;
};

struct Demonstration {
  QaExample example;
  Subgraph subgraph;
  std::string prompt_text;  // textualize(subgraph) + "\n" + question
};

struct Violation {
  std::string kind;  // duplicate_id | dangling_endpoint | self_loop | empty_text | ...
  std::string message;
};

using ValidationReport = std::vector<Violation>;

ValidationReport validate(const TextualGraph& graph);
// Checks a subgraph's induced structure against its parent.
ValidationReport validate(const Subgraph& subgraph);

/// Deterministic flattening: "nodes:\n" then one `id|text` line per node in
/// id order, then "edges:\n" and `src|text|dst` rows sorted by
/// (src, dst, text) joined by newlines.
std::string textualize(const Subgraph& subgraph);

std::vector<QaExample> load_dataset(const std::filesystem::path& path);
// `source` only labels error messages.
std::vector<QaExample> parse_dataset(std::istream& in, std::string_view source = "<stream>");
std::string serialize_example(const QaExample& example);
void save_dataset(const std::filesystem::path& path, std::span<const QaExample> examples);

}  // namespace mixdemo
