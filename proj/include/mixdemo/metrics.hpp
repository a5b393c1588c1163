#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mixdemo {

// Lowercase (ASCII), trim, collapse internal whitespace runs to one space.
std::string normalize_answer(std::string_view s);

bool exact_match(std::string_view prediction, std::span<const std::string> golds);

/// Fraction of predictions that exactly match (after normalization) any of
/// their gold answers.
double accuracy_metric(std::span<const std::string> predictions,
                       std::span<const std::vector<std::string>> golds);

// True iff some normalized gold occurs inside the normalized prediction.
bool hit_at_1(std::string_view prediction, std::span<const std::string> golds);

enum class Metric { kAccuracy, kHitAt1 };

Metric parse_metric(std::string_view name);  // "accuracy" | "hit_at_1"
std::string metric_name(Metric metric);

struct ExampleVerdict {
  std::string id;
  std::string prediction;
  std::string verdict;  // correct | wrong | error, judged by the report's metric
  bool exact = false;
  bool hit = false;
  std::string error;
};

// correct counts exact matches, so accuracy == correct / n. Errors count as wrong.
struct MetricReport {
  Metric metric = Metric::kAccuracy;
  std::size_t n = 0;
  std::size_t correct = 0;
  std::size_t errors = 0;
  double accuracy = 0.0;
  double hit_at_1 = 0.0;
  std::vector<ExampleVerdict> per_example;

  double score() const { return metric == Metric::kAccuracy ? accuracy : hit_at_1; }
};

/// Fills exact/hit/verdict for each entry (entries with a non-empty error
/// stay "error") and aggregates.
MetricReport make_report(std::vector<ExampleVerdict> verdicts,
                         std::span<const std::vector<std::string>> golds, Metric metric);

std::string report_to_json(const MetricReport& report, int indent = -1);

}  // namespace mixdemo
