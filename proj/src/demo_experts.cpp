#include "mixdemo/demo_experts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mixdemo/digest.hpp"
#include "mixdemo/error.hpp"

namespace mixdemo {

namespace {

constexpr int kMaxIterations = 100;
constexpr double kRelativeTolerance = 1e-6;

using Row = std::vector<double>;

double sq_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Uniform double in [0, 1) from the top 53 bits; portable across stdlibs.
double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<Row> kmeanspp_init(std::span<const Vector> points, std::size_t c,
                               std::mt19937_64& rng) {
  const std::size_t n = points.size();
  std::vector<Row> centers;
  std::vector<char> chosen(n, 0);
  std::size_t first = static_cast<std::size_t>(rng() % n);
  centers.emplace_back(points[first].values().begin(), points[first].values().end());
  chosen[first] = 1;

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_distance(points[i].values(), centers[0]);
  while (centers.size() < c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += chosen[i] ? 0.0 : d2[i];
    std::size_t pick = n;
    if (total > 0.0) {
      double target = unit_draw(rng) * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i] || d2[i] == 0.0) continue;
        pick = i;
        target -= d2[i];
        if (target < 0.0) break;
      }
    }
    if (pick == n) {  // every remaining point coincides with a center
      pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
    }
    chosen[pick] = 1;
    centers.emplace_back(points[pick].values().begin(), points[pick].values().end());
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_distance(points[i].values(), centers.back()));
    }
  }
  return centers;
}

std::size_t nearest(std::span<const double> x, const std::vector<Row>& centers) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < centers.size(); ++k) {
    const double d = sq_distance(x, centers[k]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

void check_points(std::span<const Vector> points) {
  if (points.empty()) throw UsageError("empty pool");
  for (const auto& p : points) {
    if (p.dim() != points.front().dim() || p.dim() == 0) {
      throw UsageError("points must share one positive dimension");
    }
  }
}

std::uint64_t restart_seed(std::uint64_t seed, std::size_t c, std::size_t restart) {
  return mix64(seed ^ mix64(static_cast<std::uint64_t>(c) * 1000 + restart));
}

}  // namespace

std::string build_prompt_text(const Subgraph& subgraph, const std::string& question) {
  return textualize(subgraph) + "\n" + question;
}

std::string build_prompt_text(const Demonstration& demo) {
  return build_prompt_text(demo.subgraph, demo.example.question);
}

KmeansResult kmeans(std::span<const Vector> points, std::size_t c, std::uint64_t seed) {
  check_points(points);
  const std::size_t n = points.size();
  if (c < 1 || c > n) {
    throw UsageError("cluster count " + std::to_string(c) + " out of range [1, " +
                     std::to_string(n) + "]");
  }
  const std::size_t dim = points.front().dim();
  std::mt19937_64 rng(seed);
  std::vector<Row> centers = kmeanspp_init(points, c, rng);
  std::vector<std::size_t> assign(n, 0);

  auto update_centers = [&] {
    std::vector<std::size_t> counts(c, 0);
    for (auto& row : centers) row.assign(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      auto v = points[i].values();
      for (std::size_t d = 0; d < dim; ++d) centers[assign[i]][d] += v[d];
    }
    for (std::size_t k = 0; k < c; ++k) {
      for (double& x : centers[k]) x /= static_cast<double>(counts[k]);
    }
  };
  auto sse = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += sq_distance(points[i].values(), centers[assign[i]]);
    return s;
  };

  KmeansResult result;
  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    for (std::size_t i = 0; i < n; ++i) assign[i] = nearest(points[i].values(), centers);

    std::vector<std::size_t> counts(c, 0);
    for (std::size_t a : assign) ++counts[a];
    for (std::size_t k = 0; k < c; ++k) {
      if (counts[k] != 0) continue;
      const std::size_t largest =
          static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] != largest) continue;
        const double d = sq_distance(points[i].values(), centers[largest]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      assign[far] = k;
      --counts[largest];
      ++counts[k];
    }

    update_centers();
    const double current = sse();
    result.history.push_back(current);
    const bool converged =
        std::isfinite(previous) &&
        std::abs(previous - current) <= kRelativeTolerance * std::max(previous, 1e-300);
    previous = current;
    if (converged || current == 0.0) break;
  }

  result.objective = previous;
  result.assignments = std::move(assign);
  result.centroids.reserve(c);
  for (auto& row : centers) result.centroids.emplace_back(std::move(row));
  return result;
}

double default_lambda(std::span<const Vector> points) {
  check_points(points);
  const std::size_t dim = points.front().dim();
  Row mean(dim, 0.0);
  for (const auto& p : points) {
    for (std::size_t d = 0; d < dim; ++d) mean[d] += p[d];
  }
  for (double& x : mean) x /= static_cast<double>(points.size());
  double total = 0.0;
  for (const auto& p : points) total += sq_distance(p.values(), mean);
  return total / static_cast<double>(points.size()) / 8.0;
}

std::size_t default_c_max(std::size_t pool_size) { return std::min<std::size_t>(pool_size, 32); }

ClusterModel select_cluster_count(std::span<const Vector> points, double lambda_reg,
                                  std::size_t c_max, std::uint64_t seed) {
  check_points(points);
  if (!(lambda_reg > 0.0) || !std::isfinite(lambda_reg)) {
    throw UsageError("lambda must be a positive finite number");
  }
  if (c_max < 1 || c_max > points.size()) {
    throw UsageError("c_max must lie in [1, pool size]");
  }

  auto best_of_restarts = [&](std::size_t c) {
    KmeansResult best;
    best.objective = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < kRestartsPerCount; ++r) {
      KmeansResult run = kmeans(points, c, restart_seed(seed, c, r));
      if (run.objective < best.objective) best = std::move(run);
    }
    return best;
  };

  // Independent per-C fits; merged in C order so the outcome is fixed.
  std::vector<std::future<KmeansResult>> fits;
  fits.reserve(c_max);
  for (std::size_t c = 1; c <= c_max; ++c) {
    fits.push_back(std::async(std::launch::async, best_of_restarts, c));
  }

  ClusterModel model;
  model.lambda_reg = lambda_reg;
  model.seed = seed;
  double best_penalized = std::numeric_limits<double>::infinity();
  for (std::size_t c = 1; c <= c_max; ++c) {
    KmeansResult fit = fits[c - 1].get();
    const double penalized = fit.objective + lambda_reg * static_cast<double>(c);
    model.scan.push_back(penalized);
    if (penalized < best_penalized) {
      best_penalized = penalized;
      model.c_star = c;
      model.objective = fit.objective;
      model.centroids = std::move(fit.centroids);
      model.assignments = std::move(fit.assignments);
    }
  }
  return model;
}

ExpertRoute route(const Vector& query, const ClusterModel& model) {
  if (model.centroids.empty()) throw UsageError("cluster model has no centroids");
  if (query.dim() != model.dim()) throw UsageError("query dimension does not match the model");
  if (query.norm() == 0.0) throw UsageError("cannot route a zero-norm query");
  ExpertRoute r;
  bool found = false;
  for (std::size_t k = 0; k < model.centroids.size(); ++k) {
    if (model.centroids[k].norm() == 0.0) continue;
    const double s = cosine(query, model.centroids[k]);
    if (!found || s > r.score) {
      r.cluster = k;
      r.score = s;
      found = true;
    }
  }
  if (!found) throw UsageError("every centroid has zero norm");
  return r;
}

std::vector<std::size_t> select_demos(const DemoPool& pool, const ClusterModel& model,
                                      ExpertRoute& route, const Vector& query, std::size_t m) {
  if (pool.prompt_vectors.size() != pool.demos.size() ||
      model.assignments.size() != pool.demos.size()) {
    throw UsageError("demo pool and cluster model are not aligned");
  }
  std::vector<std::pair<double, std::size_t>> members;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (model.assignments[i] == route.cluster) {
      members.emplace_back(cosine(query, pool.prompt_vectors[i]), i);
    }
  }
  std::sort(members.begin(), members.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  route.demo_ids.clear();
  for (std::size_t j = 0; j < std::min(m, members.size()); ++j) {
    route.demo_ids.push_back(members[j].second);
  }
  return route.demo_ids;
}

std::string cluster_model_to_json(const ClusterModel& model) {
  nlohmann::json centroids = nlohmann::json::array();
  for (const auto& c : model.centroids) {
    centroids.push_back(std::vector<double>(c.values().begin(), c.values().end()));
  }
  nlohmann::json j = {{"lambda", model.lambda_reg},   {"c_star", model.c_star},
                      {"dim", model.dim()},           {"centroids", centroids},
                      {"assignments", model.assignments}, {"objective", model.objective},
                      {"seed", model.seed}};
  return j.dump();
}

ClusterModel cluster_model_from_json(const std::string& text) {
  ClusterModel m;
  try {
    auto j = nlohmann::json::parse(text);
    m.lambda_reg = j.at("lambda").get<double>();
    m.c_star = j.at("c_star").get<std::size_t>();
    const auto dim = j.at("dim").get<std::size_t>();
    for (const auto& row : j.at("centroids")) {
      m.centroids.emplace_back(row.get<std::vector<double>>());
      if (m.centroids.back().dim() != dim) throw DataError("centroid dimension mismatch");
    }
    m.assignments = j.at("assignments").get<std::vector<std::size_t>>();
    m.objective = j.at("objective").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed cluster model: ") + e.what());
  }
  if (m.c_star != m.centroids.size() || m.c_star == 0) {
    throw DataError("cluster model c_star does not match its centroids");
  }
  std::vector<std::size_t> sizes(m.c_star, 0);
  for (std::size_t a : m.assignments) {
    if (a >= m.c_star) throw DataError("cluster model assignment out of range");
    ++sizes[a];
  }
  if (std::find(sizes.begin(), sizes.end(), 0) != sizes.end()) {
    throw DataError("cluster model has an empty cluster");
  }
  return m;
}

void save_cluster_model(const std::filesystem::path& path, const ClusterModel& model) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write cluster model " + path.string());
  out << cluster_model_to_json(model) << '\n';
}

ClusterModel load_cluster_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open cluster model " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return cluster_model_from_json(buf.str());
}

}  // namespace mixdemo
