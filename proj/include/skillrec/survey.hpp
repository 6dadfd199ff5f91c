#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace skillrec {

enum class Condition { kExp, kNoExp };

std::string to_string(Condition c);  // "exp" / "no-exp"
std::optional<Condition> condition_from_string(std::string_view s);

// Likert items: Q1 interest, Q2 unexpectedness, Q3 novelty, Q4 explanation
// effectiveness, Q5 usefulness of concepts. Q4 and Q5 exist only under exp.
inline constexpr std::size_t kNumQuestions = 5;
inline constexpr int kNeutralRating = 3;

struct SurveyResponse {
  std::string participant_id;
  std::string course_id;
  Condition condition = Condition::kNoExp;
  bool major_declared = false;
  std::array<std::optional<int>, kNumQuestions> ratings;  // q1..q5

  friend bool operator==(const SurveyResponse&, const SurveyResponse&) = default;
};

enum class SurveyIssue { kNone, kMalformedRating, kConditionMismatch };

/// kMalformedRating: q1-q3 missing or any rating outside 1-5.
/// kConditionMismatch: q4/q5 present under no-exp, or missing under exp.
SurveyIssue validate(const SurveyResponse& r);
std::string describe(SurveyIssue issue);

double serendipity(const SurveyResponse& r);  // mean(q1, q2)

nlohmann::json to_json(const SurveyResponse& r);
/// Throws ValidationError on missing or mistyped fields. Range and condition
/// checks are left to validate().
SurveyResponse survey_response_from_json(const nlohmann::json& j);

std::vector<SurveyResponse> load_survey_responses(const std::filesystem::path& path);

struct ConditionSummary {
  std::size_t responses = 0;
  std::array<std::optional<double>, kNumQuestions> question_mean;
  std::optional<double> serendipity_mean;
};

struct NeutralityCell {
  std::array<std::size_t, kNumQuestions> neutral{};
  std::array<std::size_t, kNumQuestions> rated{};
  std::size_t neutral_total = 0;
  std::size_t rated_total = 0;

  std::optional<double> rate() const;
};

struct SurveySummary {
  std::map<Condition, ConditionSummary> by_condition;
  // Keyed by (condition, major_declared).
  std::map<std::pair<Condition, bool>, NeutralityCell> neutrality;
  std::optional<double> q1_q2_correlation;  // Pearson over all responses
};

SurveySummary survey_aggregate(const std::vector<SurveyResponse>& responses);

nlohmann::json to_json(const SurveySummary& s);
std::string to_text(const SurveySummary& s);

}  // namespace skillrec
