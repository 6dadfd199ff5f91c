#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "skillrec/catalog.hpp"
#include "skillrec/model.hpp"

namespace skillrec {

// Size of a final recommendation list; each entry from a distinct department.
inline constexpr std::size_t kDefaultRecommendations = 5;

/// Scores every catalog course as the next-semester choice after `semesters`.
/// Returns one score per catalog index; -inf marks a course the scorer cannot
/// rank.
class CourseScorer {
 public:
  virtual ~CourseScorer() = default;
  virtual std::vector<double> scores(const std::vector<Semester>& semesters,
                                     const std::vector<std::string>& major) const = 0;
  virtual std::string name() const = 0;
};

class ModelScorer final : public CourseScorer {
 public:
  ModelScorer(std::shared_ptr<const TrainedModel> model, const Catalog& catalog);
  std::vector<double> scores(const std::vector<Semester>& semesters,
                             const std::vector<std::string>& major) const override;
  std::string name() const override { return "masked-sequence"; }

 private:
  std::shared_ptr<const TrainedModel> model_;
  std::vector<std::optional<std::size_t>> output_of_;  // catalog index -> model output index
};

/// score(c | history) = sum over distinct taken t of P(c after t), with
/// P(c after t) = (students taking c in a later semester than t + 1) /
/// (students taking t + |catalog|).
class CooccurrenceScorer final : public CourseScorer {
 public:
  std::vector<double> scores(const std::vector<Semester>& semesters,
                             const std::vector<std::string>& major) const override;
  std::string name() const override { return "cooccurrence"; }

  double probability_after(std::string_view taken, std::string_view candidate) const;

 private:
  friend CooccurrenceScorer cooccurrence_baseline(std::span<const EnrollmentHistory>, const Catalog&);

  const Catalog* catalog_ = nullptr;
  std::vector<int> taken_count_;
  std::vector<std::unordered_map<std::size_t, int>> after_count_;
};

CooccurrenceScorer cooccurrence_baseline(std::span<const EnrollmentHistory> corpus, const Catalog& catalog);

/// Independent uniform scores on every call.
class RandomScorer final : public CourseScorer {
 public:
  RandomScorer(std::size_t catalog_size, std::uint64_t seed);
  std::vector<double> scores(const std::vector<Semester>& semesters,
                             const std::vector<std::string>& major) const override;
  std::string name() const override { return "random"; }

 private:
  std::size_t size_;
  mutable std::mutex mutex_;
  mutable std::mt19937_64 rng_;
};

struct ScoredCourse {
  std::string course_id;
  double score = 0.0;
  std::string department;

  friend bool operator==(const ScoredCourse&, const ScoredCourse&) = default;
};

/// Recommendable, not-yet-taken courses sorted by score descending (ties by
/// id ascending).
std::vector<ScoredCourse> score_candidates(const CourseScorer& scorer, const EnrollmentHistory& history,
                                           const Catalog& catalog);

struct RecommendationList {
  std::vector<ScoredCourse> entries;
};

/// Greedy scan keeping a course only when its department is new, stopping at k.
RecommendationList diversify(std::span<const ScoredCourse> scored, std::size_t k = kDefaultRecommendations);

}  // namespace skillrec
