#include "skillrec/survey.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "skillrec/error.hpp"

namespace skillrec {

using nlohmann::json;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

}  // namespace

std::string to_string(Condition c) { return c == Condition::kExp ? "exp" : "no-exp"; }

std::optional<Condition> condition_from_string(std::string_view s) {
  if (s == "exp") return Condition::kExp;
  if (s == "no-exp") return Condition::kNoExp;
  return std::nullopt;
}

SurveyIssue validate(const SurveyResponse& r) {
  for (std::size_t q = 0; q < kNumQuestions; ++q) {
    if (r.ratings[q] && (*r.ratings[q] < 1 || *r.ratings[q] > 5)) return SurveyIssue::kMalformedRating;
  }
  for (std::size_t q = 0; q < 3; ++q) {
    if (!r.ratings[q]) return SurveyIssue::kMalformedRating;
  }
  const bool has_exp_items = r.ratings[3] || r.ratings[4];
  if (r.condition == Condition::kNoExp && has_exp_items) return SurveyIssue::kConditionMismatch;
  if (r.condition == Condition::kExp && !(r.ratings[3] && r.ratings[4])) return SurveyIssue::kConditionMismatch;
  return SurveyIssue::kNone;
}

std::string describe(SurveyIssue issue) {
  switch (issue) {
    case SurveyIssue::kNone: return "ok";
    case SurveyIssue::kMalformedRating: return "ratings q1-q3 are required and every rating must be 1-5";
    case SurveyIssue::kConditionMismatch: return "q4/q5 are answered exactly when condition is exp";
  }
  return "unknown";
}

double serendipity(const SurveyResponse& r) {
  if (!r.ratings[0] || !r.ratings[1]) throw ValidationError("serendipity needs q1 and q2");
  return (*r.ratings[0] + *r.ratings[1]) / 2.0;
}

json to_json(const SurveyResponse& r) {
  json j{{"participant_id", r.participant_id},
         {"course_id", r.course_id},
         {"condition", to_string(r.condition)},
         {"major_declared", r.major_declared}};
  for (std::size_t q = 0; q < kNumQuestions; ++q) {
    if (r.ratings[q]) j["q" + std::to_string(q + 1)] = *r.ratings[q];
  }
  return j;
}

SurveyResponse survey_response_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("survey response must be a JSON object");
  SurveyResponse r;
  try {
    r.participant_id = j.at("participant_id").get<std::string>();
    r.course_id = j.at("course_id").get<std::string>();
    const auto cond = condition_from_string(j.at("condition").get<std::string>());
    if (!cond) throw ValidationError("condition must be 'exp' or 'no-exp'");
    r.condition = *cond;
    r.major_declared = j.value("major_declared", false);
    for (std::size_t q = 0; q < kNumQuestions; ++q) {
      const std::string key = "q" + std::to_string(q + 1);
      auto it = j.find(key);
      if (it == j.end() || it->is_null()) continue;
      if (!it->is_number_integer()) throw ValidationError(key + " must be an integer");
      r.ratings[q] = it->get<int>();
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed survey response: ") + e.what());
  }
  if (r.participant_id.empty() || r.course_id.empty())
    throw ValidationError("participant_id and course_id must be nonempty");
  return r;
}

std::vector<SurveyResponse> load_survey_responses(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open survey responses: " + path.string());
  std::vector<SurveyResponse> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(survey_response_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ParseError(path.string(), line_no, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return out;
}

std::optional<double> NeutralityCell::rate() const {
  if (rated_total == 0) return std::nullopt;
  return static_cast<double>(neutral_total) / static_cast<double>(rated_total);
}

SurveySummary survey_aggregate(const std::vector<SurveyResponse>& responses) {
  SurveySummary s;
  std::map<Condition, std::array<std::pair<double, std::size_t>, kNumQuestions>> sums;
  std::map<Condition, std::pair<double, std::size_t>> seren;
  std::vector<std::pair<double, double>> q12;

  for (const auto& r : responses) {
    auto& cs = s.by_condition[r.condition];
    ++cs.responses;
    auto& cell = s.neutrality[{r.condition, r.major_declared}];
    for (std::size_t q = 0; q < kNumQuestions; ++q) {
      if (!r.ratings[q]) continue;
      auto& [sum, n] = sums[r.condition][q];
      sum += *r.ratings[q];
      ++n;
      ++cell.rated[q];
      ++cell.rated_total;
      if (*r.ratings[q] == kNeutralRating) {
        ++cell.neutral[q];
        ++cell.neutral_total;
      }
    }
    if (r.ratings[0] && r.ratings[1]) {
      seren[r.condition].first += serendipity(r);
      ++seren[r.condition].second;
      q12.emplace_back(*r.ratings[0], *r.ratings[1]);
    }
  }
  for (auto& [cond, cs] : s.by_condition) {
    for (std::size_t q = 0; q < kNumQuestions; ++q) {
      const auto& [sum, n] = sums[cond][q];
      if (n) cs.question_mean[q] = sum / static_cast<double>(n);
    }
    if (seren[cond].second) cs.serendipity_mean = seren[cond].first / static_cast<double>(seren[cond].second);
  }

  if (q12.size() >= 2) {
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : q12) {
      mx += x;
      my += y;
    }
    mx /= static_cast<double>(q12.size());
    my /= static_cast<double>(q12.size());
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (const auto& [x, y] : q12) {
      sxy += (x - mx) * (y - my);
      sxx += (x - mx) * (x - mx);
      syy += (y - my) * (y - my);
    }
    if (sxx > 0.0 && syy > 0.0) s.q1_q2_correlation = sxy / std::sqrt(sxx * syy);
  }
  return s;
}

json to_json(const SurveySummary& s) {
  json conditions = json::object();
  for (const auto& [cond, cs] : s.by_condition) {
    json means = json::object();
    for (std::size_t q = 0; q < kNumQuestions; ++q) means["q" + std::to_string(q + 1)] = optional_number(cs.question_mean[q]);
    conditions[to_string(cond)] = json{{"responses", cs.responses},
                                       {"means", means},
                                       {"serendipity", optional_number(cs.serendipity_mean)}};
  }
  json cells = json::array();
  for (const auto& [key, cell] : s.neutrality) {
    json per_q = json::object();
    for (std::size_t q = 0; q < kNumQuestions; ++q) {
      per_q["q" + std::to_string(q + 1)] = json{{"neutral", cell.neutral[q]}, {"rated", cell.rated[q]}};
    }
    cells.push_back(json{{"condition", to_string(key.first)},
                         {"major_declared", key.second},
                         {"neutral", cell.neutral_total},
                         {"rated", cell.rated_total},
                         {"rate", optional_number(cell.rate())},
                         {"questions", per_q}});
  }
  return json{{"conditions", conditions},
              {"neutrality", cells},
              {"q1_q2_correlation", optional_number(s.q1_q2_correlation)}};
}

std::string to_text(const SurveySummary& s) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %9s %7s %7s %7s %7s %7s %11s\n", "cond", "responses", "q1", "q2", "q3",
                "q4", "q5", "serendipity");
  out << line;
  for (const auto& [cond, cs] : s.by_condition) {
    std::snprintf(line, sizeof line, "%-8s %9zu %7s %7s %7s %7s %7s %11s\n", to_string(cond).c_str(), cs.responses,
                  fmt_opt(cs.question_mean[0]).c_str(), fmt_opt(cs.question_mean[1]).c_str(),
                  fmt_opt(cs.question_mean[2]).c_str(), fmt_opt(cs.question_mean[3]).c_str(),
                  fmt_opt(cs.question_mean[4]).c_str(), fmt_opt(cs.serendipity_mean).c_str());
    out << line;
  }
  out << '\n';
  std::snprintf(line, sizeof line, "%-8s %-9s %8s %8s %8s\n", "cond", "declared", "neutral", "rated", "rate");
  out << line;
  for (const auto& [key, cell] : s.neutrality) {
    std::snprintf(line, sizeof line, "%-8s %-9s %8zu %8zu %8s\n", to_string(key.first).c_str(),
                  key.second ? "yes" : "no", cell.neutral_total, cell.rated_total, fmt_opt(cell.rate()).c_str());
    out << line;
  }
  out << "\nq1/q2 pearson: " << fmt_opt(s.q1_q2_correlation) << '\n';
  return out.str();
}

}  // namespace skillrec
