#include "skillrec/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "skillrec/error.hpp"

namespace skillrec {

namespace {
constexpr double kUnranked = -std::numeric_limits<double>::infinity();
}

ModelScorer::ModelScorer(std::shared_ptr<const TrainedModel> model, const Catalog& catalog)
    : model_(std::move(model)) {
  if (!model_) throw ValidationError("model scorer needs a model");
  output_of_.reserve(catalog.size());
  for (const auto& c : catalog.courses()) output_of_.push_back(model_->vocab.output_index(c.id));
}

std::vector<double> ModelScorer::scores(const std::vector<Semester>& semesters,
                                        const std::vector<std::string>& major) const {
  const auto dist = model_->next_semester_distribution(semesters, major);
  std::vector<double> out(output_of_.size(), kUnranked);
  for (std::size_t i = 0; i < output_of_.size(); ++i) {
    if (output_of_[i]) out[i] = dist[*output_of_[i]];
  }
  return out;
}

// ---------------------------------------------------------------------------

CooccurrenceScorer cooccurrence_baseline(std::span<const EnrollmentHistory> corpus, const Catalog& catalog) {
  if (corpus.empty()) throw ValidationError("co-occurrence baseline needs a nonempty corpus");
  CooccurrenceScorer s;
  s.catalog_ = &catalog;
  s.taken_count_.assign(catalog.size(), 0);
  s.after_count_.assign(catalog.size(), {});
  for (const auto& h : corpus) {
    // First semester each course appears in, per student.
    std::unordered_map<std::size_t, std::size_t> first;
    std::unordered_map<std::size_t, std::size_t> last;
    for (std::size_t sem = 0; sem < h.semesters.size(); ++sem) {
      for (const auto& id : h.semesters[sem]) {
        auto idx = catalog.index_of(id);
        if (!idx) continue;
        first.try_emplace(*idx, sem);
        last[*idx] = sem;
      }
    }
    for (const auto& [t, t_first] : first) {
      ++s.taken_count_[t];
      for (const auto& [c, c_last] : last) {
        if (c != t && c_last > t_first) ++s.after_count_[t][c];
      }
    }
  }
  return s;
}

double CooccurrenceScorer::probability_after(std::string_view taken, std::string_view candidate) const {
  const auto v = static_cast<double>(catalog_->size());
  auto c = catalog_->index_of(candidate);
  if (!c) throw NotFoundError("unknown course id: " + std::string(candidate));
  auto t = catalog_->index_of(taken);
  if (!t) return 1.0 / v;
  auto it = after_count_[*t].find(*c);
  const double after = it == after_count_[*t].end() ? 0.0 : it->second;
  return (after + 1.0) / (taken_count_[*t] + v);
}

std::vector<double> CooccurrenceScorer::scores(const std::vector<Semester>& semesters,
                                               const std::vector<std::string>&) const {
  const auto v = static_cast<double>(catalog_->size());
  std::unordered_set<std::size_t> taken;
  std::size_t unknown_taken = 0;
  for (const auto& sem : semesters) {
    for (const auto& id : sem) {
      auto idx = catalog_->index_of(id);
      if (idx) {
        taken.insert(*idx);
      } else {
        ++unknown_taken;
      }
    }
  }
  std::vector<double> out(catalog_->size(), static_cast<double>(unknown_taken) / v);
  // Sum in ascending index order so the result does not depend on hashing.
  std::vector<std::size_t> ordered(taken.begin(), taken.end());
  std::sort(ordered.begin(), ordered.end());
  for (std::size_t t : ordered) {
    const double denom = taken_count_[t] + v;
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += 1.0 / denom;
    for (const auto& [c, n] : after_count_[t]) out[c] += n / denom;
  }
  return out;
}

// ---------------------------------------------------------------------------

RandomScorer::RandomScorer(std::size_t catalog_size, std::uint64_t seed) : size_(catalog_size), rng_(seed) {}

std::vector<double> RandomScorer::scores(const std::vector<Semester>&, const std::vector<std::string>&) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::lock_guard lock(mutex_);
  std::vector<double> out(size_);
  for (double& x : out) x = u(rng_);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<ScoredCourse> score_candidates(const CourseScorer& scorer, const EnrollmentHistory& history,
                                           const Catalog& catalog) {
  const auto raw = scorer.scores(history.semesters, history.major);
  if (raw.size() != catalog.size()) throw ValidationError("scorer returned the wrong number of scores");
  std::unordered_set<std::string> taken;
  for (const auto& sem : history.semesters) taken.insert(sem.begin(), sem.end());

  std::vector<ScoredCourse> out;
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    const Course& c = catalog[i];
    if (!c.recommendable || taken.count(c.id) || std::isinf(raw[i]) || std::isnan(raw[i])) continue;
    out.push_back({c.id, raw[i], c.department});
  }
  std::sort(out.begin(), out.end(), [](const ScoredCourse& a, const ScoredCourse& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.course_id < b.course_id;
  });
  return out;
}

RecommendationList diversify(std::span<const ScoredCourse> scored, std::size_t k) {
  RecommendationList list;
  std::unordered_set<std::string> seen;
  for (const auto& s : scored) {
    if (list.entries.size() >= k) break;
    if (seen.insert(s.department).second) list.entries.push_back(s);
  }
  return list;
}

}  // namespace skillrec
