#include "mixdemo/graph_store.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "mixdemo/error.hpp"

namespace mixdemo {

namespace {

using nlohmann::json;

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string at_line(std::string_view source, std::size_t line) {
  std::ostringstream os;
  os << source << ", line " << line;
  return os.str();
}

const json& require(const json& obj, const char* key, std::string_view where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw DataError("missing field \"" + std::string(key) + "\" (" + std::string(where) + ")");
  }
  return *it;
}

std::string require_string(const json& obj, const char* key, std::string_view where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) {
    throw DataError("field \"" + std::string(key) + "\" must be a string (" +
                    std::string(where) + ")");
  }
  return v.get<std::string>();
}

// Node ids may be integers or strings. String ids are mapped to integers in
// order of first appearance and remembered in the alias table.
class IdResolver {
 public:
  explicit IdResolver(const json& nodes) {
    for (const auto& n : nodes) {
      if (n.is_object() && n.contains("id") && n["id"].is_string()) {
        use_aliases_ = true;
        break;
      }
    }
  }

  NodeId declare(const json& id, std::string_view where) {
    if (!use_aliases_) return as_int(id, where);
    std::string key = id.is_string() ? id.get<std::string>() : id.dump();
    auto [it, inserted] = aliases_.emplace(key, next_);
    if (inserted) ++next_;
    // A repeated string id maps to the same integer; validate() flags it.
    return it->second;
  }

  std::optional<NodeId> resolve(const json& id, std::string_view where) const {
    if (!use_aliases_) return as_int(id, where);
    std::string key = id.is_string() ? id.get<std::string>() : id.dump();
    auto it = aliases_.find(key);
    if (it == aliases_.end()) return std::nullopt;
    return it->second;
  }

  std::map<std::string, NodeId> take_aliases() { return std::move(aliases_); }

 private:
  static NodeId as_int(const json& id, std::string_view where) {
    if (!id.is_number_integer()) {
      throw DataError("node id must be an integer or string (" + std::string(where) + ")");
    }
    return id.get<NodeId>();
  }

  bool use_aliases_ = false;
  NodeId next_ = 0;
  std::map<std::string, NodeId> aliases_;
};

TextualGraph parse_graph(const json& g, std::string_view where) {
  if (!g.is_object()) throw DataError("\"graph\" must be an object (" + std::string(where) + ")");
  const json& jn = require(g, "nodes", where);
  const json& je = require(g, "edges", where);
  if (!jn.is_array() || !je.is_array()) {
    throw DataError("graph nodes/edges must be arrays (" + std::string(where) + ")");
  }
  IdResolver ids(jn);
  std::vector<TextNode> nodes;
  nodes.reserve(jn.size());
  for (const auto& n : jn) {
    if (!n.is_object()) throw DataError("node must be an object (" + std::string(where) + ")");
    NodeId id = ids.declare(require(n, "id", where), where);
    nodes.push_back({id, require_string(n, "text", where)});
  }
  std::vector<TextEdge> edges;
  edges.reserve(je.size());
  for (const auto& e : je) {
    if (!e.is_object()) throw DataError("edge must be an object (" + std::string(where) + ")");
    auto src = ids.resolve(require(e, "src", where), where);
    auto dst = ids.resolve(require(e, "dst", where), where);
    if (!src || !dst) throw DataError("dangling endpoint, " + std::string(where));
    edges.push_back({*src, *dst, require_string(e, "text", where)});
  }
  return TextualGraph(std::move(nodes), std::move(edges), ids.take_aliases());
}

}  // namespace

TextualGraph::TextualGraph(std::vector<TextNode> nodes, std::vector<TextEdge> edges,
                           std::map<std::string, NodeId> aliases)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), aliases_(std::move(aliases)) {
  index_.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) index_.emplace(nodes_[i].id, i);
}

std::optional<std::size_t> TextualGraph::position(NodeId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const TextNode& TextualGraph::node(NodeId id) const {
  auto pos = position(id);
  if (!pos) throw UsageError("no node with id " + std::to_string(id));
  return nodes_[*pos];
}

Subgraph whole_graph(GraphPtr graph) {
  Subgraph s;
  for (const auto& n : graph->nodes()) s.node_ids.insert(n.id);
  for (std::size_t i = 0; i < graph->edges().size(); ++i) s.edge_indices.insert(i);
  s.parent = std::move(graph);
  return s;
}

bool QaExample::operator==(const QaExample& other) const {
  if (id != other.id || question != other.question || answers != other.answers) return false;
  if (!graph || !other.graph) return graph == other.graph;
  return *graph == *other.graph;
}

ValidationReport validate(const TextualGraph& graph) {
  ValidationReport report;
  std::set<NodeId> seen;
  std::set<NodeId> reported;
  for (const auto& n : graph.nodes()) {
    if (!seen.insert(n.id).second && reported.insert(n.id).second) {
      report.push_back({"duplicate_id", "duplicate node id " + std::to_string(n.id)});
    }
    if (is_blank(n.text)) {
      report.push_back({"empty_text", "node " + std::to_string(n.id) + " has empty text"});
    }
  }
  for (std::size_t i = 0; i < graph.edges().size(); ++i) {
    const auto& e = graph.edges()[i];
    const std::string label = "edge " + std::to_string(i);
    if (!graph.has_node(e.src) || !graph.has_node(e.dst)) {
      report.push_back({"dangling_endpoint", label + " has dangling endpoint " +
                                                 std::to_string(graph.has_node(e.src) ? e.dst : e.src)});
    }
    if (e.src == e.dst) {
      report.push_back({"self_loop", label + " is a self-loop on node " + std::to_string(e.src)});
    }
    if (is_blank(e.text)) {
      report.push_back({"empty_text", label + " has empty text"});
    }
  }
  return report;
}

ValidationReport validate(const Subgraph& subgraph) {
  ValidationReport report;
  if (!subgraph.parent) {
    if (!subgraph.node_ids.empty() || !subgraph.edge_indices.empty()) {
      report.push_back({"no_parent", "subgraph has elements but no parent graph"});
    }
    return report;
  }
  const TextualGraph& g = *subgraph.parent;
  for (NodeId id : subgraph.node_ids) {
    if (!g.has_node(id)) {
      report.push_back({"foreign_node", "node " + std::to_string(id) + " not in parent graph"});
    }
  }
  for (std::size_t idx : subgraph.edge_indices) {
    if (idx >= g.edges().size()) {
      report.push_back({"foreign_edge", "edge index " + std::to_string(idx) + " out of range"});
      continue;
    }
    const auto& e = g.edges()[idx];
    if (!subgraph.node_ids.contains(e.src) || !subgraph.node_ids.contains(e.dst)) {
      report.push_back({"dangling_endpoint",
                        "edge " + std::to_string(idx) + " endpoint outside subgraph"});
    }
  }
  return report;
}

std::string textualize(const Subgraph& subgraph) {
  std::string out = "nodes:\n";
  if (subgraph.parent) {
    const TextualGraph& g = *subgraph.parent;
    for (NodeId id : subgraph.node_ids) {
      out += std::to_string(id);
      out += '|';
      out += g.node(id).text;
      out += '\n';
    }
  }
  out += "edges:\n";
  if (!subgraph.parent || subgraph.edge_indices.empty()) return out;

  const auto& edges = subgraph.parent->edges();
  std::vector<const TextEdge*> rows;
  rows.reserve(subgraph.edge_indices.size());
  for (std::size_t idx : subgraph.edge_indices) rows.push_back(&edges.at(idx));
  std::sort(rows.begin(), rows.end(), [](const TextEdge* a, const TextEdge* b) {
    return std::tie(a->src, a->dst, a->text) < std::tie(b->src, b->dst, b->text);
  });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0) out += '\n';
    out += std::to_string(rows[i]->src);
    out += '|';
    out += rows[i]->text;
    out += '|';
    out += std::to_string(rows[i]->dst);
  }
  return out;
}

std::vector<QaExample> parse_dataset(std::istream& in, std::string_view source) {
  std::vector<QaExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const std::string where = at_line(source, line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("malformed JSON, " + where + ": " + e.what());
    }
    if (!obj.is_object()) throw DataError("expected a JSON object, " + where);

    QaExample ex;
    const json& id = require(obj, "id", where);
    ex.id = id.is_string() ? id.get<std::string>() : id.dump();
    ex.question = require_string(obj, "question", where);
    if (is_blank(ex.question)) throw DataError("empty question, " + where);
    const json& answers = require(obj, "answers", where);
    if (!answers.is_array()) throw DataError("\"answers\" must be an array, " + where);
    for (const auto& a : answers) {
      if (!a.is_string()) throw DataError("answers must be strings, " + where);
      ex.answers.push_back(a.get<std::string>());
    }
    if (ex.answers.empty()) throw DataError("empty answers list, " + where);

    auto graph = std::make_shared<const TextualGraph>(parse_graph(require(obj, "graph", where), where));
    ValidationReport report = validate(*graph);
    if (!report.empty()) {
      const Violation& v = report.front();
      if (v.kind == "dangling_endpoint") throw DataError("dangling endpoint, " + where);
      throw DataError(v.message + ", " + where);
    }
    ex.graph = std::move(graph);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<QaExample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file " + path.string());
  return parse_dataset(in, path.string());
}

std::string serialize_example(const QaExample& example) {
  json nodes = json::array();
  json edges = json::array();
  if (example.graph) {
    for (const auto& n : example.graph->nodes()) nodes.push_back({{"id", n.id}, {"text", n.text}});
    for (const auto& e : example.graph->edges()) {
      edges.push_back({{"src", e.src}, {"dst", e.dst}, {"text", e.text}});
    }
  }
  json obj = {{"id", example.id},
              {"question", example.question},
              {"answers", example.answers},
              {"graph", {{"nodes", nodes}, {"edges", edges}}}};
  return obj.dump();
}

void save_dataset(const std::filesystem::path& path, std::span<const QaExample> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file " + path.string());
  for (const auto& ex : examples) out << serialize_example(ex) << '\n';
}

}  // namespace mixdemo
