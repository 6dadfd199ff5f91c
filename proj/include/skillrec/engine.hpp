#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "skillrec/catalog.hpp"
#include "skillrec/config.hpp"
#include "skillrec/embeddings.hpp"
#include "skillrec/explainer.hpp"
#include "skillrec/scoring.hpp"
#include "skillrec/survey.hpp"
#include "skillrec/tagger.hpp"

namespace skillrec {

/// Everything needed to answer recommendation requests. Immutable once built.
struct EngineState {
  std::shared_ptr<const Catalog> catalog;  // skills already extracted
  std::vector<EnrollmentHistory> histories;
  std::unordered_map<std::string, std::size_t> student_index;
  std::vector<SequenceTagger> taggers;
  std::shared_ptr<const EmbeddingStore> store;
  std::shared_ptr<const TrainedModel> model;  // may be null when scorer is injected
  std::shared_ptr<const CourseScorer> scorer;
  Config config;

  const EnrollmentHistory* find_student(std::string_view id) const;
};

/// Builds the state from parts, indexing students and wrapping the model in a
/// ModelScorer when no scorer is given.
std::shared_ptr<const EngineState> make_engine(std::shared_ptr<const Catalog> catalog,
                                               std::vector<EnrollmentHistory> histories,
                                               std::shared_ptr<const TrainedModel> model,
                                               std::shared_ptr<const EmbeddingStore> store, Config config,
                                               std::shared_ptr<const CourseScorer> scorer = nullptr,
                                               std::vector<SequenceTagger> taggers = {});

/// Reads catalog.jsonl, enrollments.jsonl and model.json from config.data_dir.
/// Courses without stored skills are run through any tagger-*.json models
/// found there.
std::shared_ptr<const EngineState> load_engine(const Config& config);

struct RecommendationEntry {
  std::size_t rank = 0;  // 1-based position in score order
  std::string course_id;
  std::string title;
  std::string department;
  std::string description;
  double score = 0.0;
  std::optional<Explanation> explanation;
};

struct RecommendationPayload {
  std::string student_id;
  Condition condition = Condition::kExp;
  std::uint64_t seed = 0;
  std::vector<RecommendationEntry> entries;  // presentation order
};

/// Scores, diversifies to config.k departments, explains under exp, and
/// shuffles the entries with a generator seeded by `seed`.
RecommendationPayload recommend(const EngineState& engine, const EnrollmentHistory& history, Condition condition,
                                std::uint64_t seed);

/// `history` plus one extra semester holding `added` (skipped when empty).
/// Throws NotFoundError for unknown course ids.
EnrollmentHistory with_added_semester(const EngineState& engine, const EnrollmentHistory& history,
                                      const std::vector<std::string>& added);

nlohmann::json to_json(const RecommendationPayload& p);
nlohmann::json course_to_json(const Course& c);

/// Survey responses keyed by (participant, course, condition); the condition
/// fixes the question set. Backed by an append-only JSON-lines log that is
/// rewritten in key order every `compact_every` appends.
class FeedbackStore {
 public:
  explicit FeedbackStore(std::filesystem::path path, std::size_t compact_every = 256);

  /// Returns true when an existing record was replaced.
  bool upsert(const SurveyResponse& r);
  std::vector<SurveyResponse> all() const;
  std::size_t size() const;
  void compact();
  const std::filesystem::path& path() const { return path_; }

 private:
  using Key = std::tuple<std::string, std::string, Condition>;

  void replay();
  void rewrite_locked();

  std::filesystem::path path_;
  std::size_t compact_every_;
  mutable std::mutex mutex_;
  std::map<Key, SurveyResponse> records_;
  std::size_t appends_since_compaction_ = 0;
};

}  // namespace skillrec
