#include "mixdemo/metrics.hpp"

#include <cctype>

#include <json.hpp>

#include "mixdemo/error.hpp"

namespace mixdemo {

std::string normalize_answer(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(u));
  }
  return out;
}

bool exact_match(std::string_view prediction, std::span<const std::string> golds) {
  const std::string p = normalize_answer(prediction);
  for (const auto& g : golds) {
    if (normalize_answer(g) == p) return true;
  }
  return false;
}

double accuracy_metric(std::span<const std::string> predictions,
                       std::span<const std::vector<std::string>> golds) {
  if (predictions.size() != golds.size()) {
    throw UsageError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(golds.size()) + " gold lists");
  }
  if (predictions.empty()) throw UsageError("accuracy: no predictions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (exact_match(predictions[i], golds[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

bool hit_at_1(std::string_view prediction, std::span<const std::string> golds) {
  if (golds.empty()) throw UsageError("hit_at_1: gold answer list is empty");
  const std::string p = normalize_answer(prediction);
  for (const auto& g : golds) {
    if (p.find(normalize_answer(g)) != std::string::npos) return true;
  }
  return false;
}

Metric parse_metric(std::string_view name) {
  if (name == "accuracy") return Metric::kAccuracy;
  if (name == "hit_at_1" || name == "hit@1") return Metric::kHitAt1;
  throw UsageError("unknown metric '" + std::string(name) + "' (expected accuracy or hit_at_1)");
}

std::string metric_name(Metric metric) {
  return metric == Metric::kAccuracy ? "accuracy" : "hit_at_1";
}

MetricReport make_report(std::vector<ExampleVerdict> verdicts,
                         std::span<const std::vector<std::string>> golds, Metric metric) {
  if (verdicts.size() != golds.size()) throw UsageError("report: verdicts and golds differ in length");
  if (verdicts.empty()) throw UsageError("report: no examples");
  MetricReport r;
  r.metric = metric;
  r.n = verdicts.size();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    auto& v = verdicts[i];
    if (!v.error.empty()) {
      v.exact = v.hit = false;
      v.verdict = "error";
      ++r.errors;
      continue;
    }
    v.exact = exact_match(v.prediction, golds[i]);
    v.hit = !golds[i].empty() && hit_at_1(v.prediction, golds[i]);
    const bool ok = metric == Metric::kAccuracy ? v.exact : v.hit;
    v.verdict = ok ? "correct" : "wrong";
    if (v.exact) ++r.correct;
    if (v.hit) ++hits;
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.n);
  r.hit_at_1 = static_cast<double>(hits) / static_cast<double>(r.n);
  r.per_example = std::move(verdicts);
  return r;
}

std::string report_to_json(const MetricReport& report, int indent) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& v : report.per_example) {
    nlohmann::json row = {{"id", v.id},       {"prediction", v.prediction},
                          {"verdict", v.verdict}, {"exact", v.exact},
                          {"hit", v.hit}};
    if (!v.error.empty()) row["error"] = v.error;
    rows.push_back(std::move(row));
  }
  nlohmann::json j = {{"metric", metric_name(report.metric)},
                      {"n", report.n},
                      {"correct", report.correct},
                      {"errors", report.errors},
                      {"accuracy", report.accuracy},
                      {"hit_at_1", report.hit_at_1},
                      {"per_example", std::move(rows)}};
  return j.dump(indent);
}

}  // namespace mixdemo
