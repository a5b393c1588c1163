#pragma once

#include <vector>

#include "mixdemo/encoder.hpp"

namespace mixdemo::detail {

// One directed use of an undirected edge during message passing.
struct Orientation {
  std::size_t src = 0;
  std::size_t dst = 0;
  std::size_t edge = 0;
};

// Forward intermediates kept for the backward pass.
struct EncodeTrace {
  std::vector<Orientation> orientations;
  std::vector<double> degree;                  // orientations targeting each node
  std::vector<double> gamma;                   // per edge, layer-independent
  std::vector<std::vector<Vec>> states;        // layers + 1 rows of node states
  std::vector<std::vector<double>> zeta;       // [layer][orientation]
  std::vector<std::vector<Vec>> messages;      // [layer][orientation]
  Vec z_s;
};

struct ExampleTrace {
  EncodeTrace current;
  std::vector<EncodeTrace> demos;
  Vec query_key;  // query_proj(q)
  FusionResult fusion;
  Vec hidden;     // tanh(proj_hidden(z_final))
  Vec p_graph;
  Vec logits;
};

void check_graph(const GraphInput& graph, const Vec& q, const EncoderParams& params);
std::vector<Orientation> orientations(const GraphInput& graph);
EncodeTrace encode_traced(const GraphInput& graph, const Vec& q, const EncoderParams& params);
ExampleTrace example_traced(const EncoderExample& example, const EncoderParams& params,
                            const SurrogateHead* head);

Vec concat(std::initializer_list<const Vec*> parts);
double safe_cosine(const Vec& a, const Vec& b);

}  // namespace mixdemo::detail
