#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "skillrec/catalog.hpp"
#include "skillrec/scoring.hpp"

namespace skillrec {

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  std::size_t courses = 0;
};

enum class Averaging { kMicro, kMacro };

using TokenRange = std::pair<std::size_t, std::size_t>;
using SpanSets = std::map<std::string, std::set<TokenRange>>;

/// Exact-boundary span matching. Micro pools counts over all courses; macro
/// averages per-course P, R and F1. A course with no gold and no predicted
/// spans scores 1 on all three.
MetricsReport span_prf(const SpanSets& gold, const SpanSets& predicted, Averaging mode);

double f1_score(double precision, double recall);

/// Cohen's kappa with marginal chance agreement. When chance agreement is 1
/// the result is 1 if the raters agree everywhere, otherwise an error.
double cohen_kappa(std::span<const int> a, std::span<const int> b);
double proportional_agreement(std::span<const int> a, std::span<const int> b);

/// Masks each history's final semester and averages
/// |top-k ∩ actual| / min(k, |actual|) over histories. Histories with fewer
/// than two semesters are skipped.
double recall_at_k(const CourseScorer& scorer, std::span<const EnrollmentHistory> histories,
                   const Catalog& catalog, std::size_t k = kDefaultRecommendations, bool diversified = false);

struct MonteCarloInterval {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t trials = 0;
};

/// Distribution of recall@k for the uniform random scorer; the interval holds
/// the central `coverage` mass of the trial means.
MonteCarloInterval random_recall_interval(std::span<const EnrollmentHistory> histories, const Catalog& catalog,
                                          std::size_t k, std::size_t trials, double coverage,
                                          std::uint64_t seed, bool diversified = false);

struct HistorySplit {
  std::vector<EnrollmentHistory> train;
  std::vector<EnrollmentHistory> test;
};

/// Seeded shuffle, then the first round(test_fraction * n) students go to test.
HistorySplit split_histories(std::vector<EnrollmentHistory> histories, double test_fraction, std::uint64_t seed);

nlohmann::json to_json(const MetricsReport& m);
std::string to_text(const MetricsReport& m);

}  // namespace skillrec
