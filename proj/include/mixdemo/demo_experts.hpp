#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mixdemo/embedding.hpp"
#include "mixdemo/graph_store.hpp"

namespace mixdemo {

// x = textualize(S) + "\n" + question
std::string build_prompt_text(const Subgraph& subgraph, const std::string& question);
std::string build_prompt_text(const Demonstration& demo);

struct DemoPool {
  std::vector<Demonstration> demos;
  std::vector<Vector> prompt_vectors;  // embeddings of demos[i].prompt_text

  std::size_t size() const { return demos.size(); }
};

struct KmeansResult {
  std::vector<Vector> centroids;
  std::vector<std::size_t> assignments;
  double objective = 0.0;            // sum of squared distances to assigned centroid
  std::vector<double> history;       // objective after every Lloyd iteration
};

/// Lloyd's algorithm from a seeded k-means++ start. Stops when the relative
/// objective change drops below 1e-6 or after 100 iterations. An emptied
/// cluster takes the point farthest from the centroid of the largest cluster.
KmeansResult kmeans(std::span<const Vector> points, std::size_t c, std::uint64_t seed);

struct ClusterModel {
  std::vector<Vector> centroids;
  std::vector<std::size_t> assignments;
  std::size_t c_star = 0;
  double lambda_reg = 0.0;
  double objective = 0.0;  // within-cluster sum of squares at c_star
  std::uint64_t seed = 0;
  // Penalized objective (SSE + lambda * C) for C = 1..c_max; not persisted.
  std::vector<double> scan;

  std::size_t dim() const { return centroids.empty() ? 0 : centroids.front().dim(); }
};

inline constexpr std::size_t kRestartsPerCount = 5;

// Mean squared distance to the global centroid, divided by 8.
double default_lambda(std::span<const Vector> points);
std::size_t default_c_max(std::size_t pool_size);

/// Scans C = 1..c_max (best of kRestartsPerCount seeded restarts each) and
/// keeps the C minimizing SSE + lambda_reg * C; ties go to the smaller C.
ClusterModel select_cluster_count(std::span<const Vector> points, double lambda_reg,
                                  std::size_t c_max, std::uint64_t seed);

struct ExpertRoute {
  std::size_t cluster = 0;
  double score = 0.0;
  std::vector<std::size_t> demo_ids;
};

// Hard argmax of cosine to the centroids; ties go to the smaller index.
ExpertRoute route(const Vector& query, const ClusterModel& model);

/// The m members of the routed cluster most cosine-similar to the query,
/// best first (ties by pool index). Fills route.demo_ids and returns them.
std::vector<std::size_t> select_demos(const DemoPool& pool, const ClusterModel& model,
                                      ExpertRoute& route, const Vector& query, std::size_t m);

std::string cluster_model_to_json(const ClusterModel& model);
ClusterModel cluster_model_from_json(const std::string& text);
void save_cluster_model(const std::filesystem::path& path, const ClusterModel& model);
ClusterModel load_cluster_model(const std::filesystem::path& path);

}  // namespace mixdemo
