#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixdemo/embedding.hpp"
#include "mixdemo/encoder.hpp"
#include "mixdemo/pcst.hpp"

namespace fixtures {

std::filesystem::path data_path(const std::string& name);
std::filesystem::path reference_path();
const nlohmann::json& reference();

mixdemo::Vec vec(const nlohmann::json& j);
mixdemo::GraphInput graph(const nlohmann::json& j);

// Uniform in [lo, hi) from the top 53 bits of one draw.
double uniform(std::mt19937_64& rng, double lo, double hi);

/// Random PCST instance: n nodes, up to m distinct undirected edges, node and
/// edge prizes drawn from a mix of zero and rank-like values.
mixdemo::PcstInstance random_instance(std::mt19937_64& rng, std::size_t max_nodes,
                                      std::size_t max_edges);

// Path a-b with node prizes 10 and 10, edge cost 1 (optimum 19).
mixdemo::PcstInstance path_19();
// Path a-b-c with node prizes 5, 0, 5, edge cost 1 (optimum 8).
mixdemo::PcstInstance path_8();

/// 10 points near (+100, 0, ...) and 10 near (-100, 0, ...), jitter 0.1.
std::vector<mixdemo::Vector> two_blobs(std::uint64_t seed, std::size_t dim = 4);

/// Eight tiny graphs of "<colour> <object>" nodes; the label is the colour of
/// the node with the highest retrieval prize for the query.
struct ToyTask {
  std::vector<mixdemo::EncoderExample> examples;
  std::vector<std::string> vocab;
};
ToyTask toy_task(std::size_t d_in);

}  // namespace fixtures
