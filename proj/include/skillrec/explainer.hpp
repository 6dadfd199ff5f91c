#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "skillrec/catalog.hpp"
#include "skillrec/embeddings.hpp"

namespace skillrec {

// Two skills match when their embedding cosine strictly exceeds this.
inline constexpr double kDefaultMatchThreshold = 0.85;
// Entries per explanation list.
inline constexpr std::size_t kDefaultExplanationSize = 7;

struct SkillMatch {
  std::string target_skill;
  std::string matched_skill;
  double similarity = 0.0;
};

struct RankedSkill {
  std::string text;
  double relevance = 0.0;  // clamp(cosine(skill, description), 0, 1)

  friend bool operator==(const RankedSkill&, const RankedSkill&) = default;
};

struct Explanation {
  std::string course_id;
  std::vector<RankedSkill> learned;
  std::vector<RankedSkill> fresh;  // serialized as "new"

  friend bool operator==(const Explanation&, const Explanation&) = default;
};

struct SkillPartition {
  std::vector<std::string> learned;
  std::vector<std::string> fresh;
};

/// Distinct skill texts of a course, in stored order.
std::vector<std::string> skill_texts(const Course& course);

/// For each target skill, every taken skill it matches: identical text always
/// matches, otherwise cosine must exceed `threshold`. Skills whose embedding
/// cannot be resolved are skipped with a warning.
std::vector<SkillMatch> match_skills(const std::vector<std::string>& target_skills,
                                     const std::vector<std::string>& taken_skills,
                                     const EmbeddingStore& store,
                                     double threshold = kDefaultMatchThreshold);

/// Learned = target skills with a soft match in the union of the skills of
/// every course in the history; new = the rest. Order follows the target's
/// skill order.
SkillPartition partition_skills(const Course& target, const EnrollmentHistory& history,
                                const Catalog& catalog, const EmbeddingStore& store,
                                double threshold = kDefaultMatchThreshold);

/// Sorted by relevance descending, ties alphabetical.
std::vector<RankedSkill> rank_skills(const std::vector<std::string>& skills, const Course& course,
                                     const EmbeddingStore& store);

Explanation build_explanation(const Course& target, const EnrollmentHistory& history,
                              const Catalog& catalog, const EmbeddingStore& store,
                              std::size_t n = kDefaultExplanationSize,
                              double threshold = kDefaultMatchThreshold);

nlohmann::json to_json(const Explanation& e);
Explanation explanation_from_json(const nlohmann::json& j);

}  // namespace skillrec
