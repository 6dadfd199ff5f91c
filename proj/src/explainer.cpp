#include "skillrec/explainer.hpp"

#include <algorithm>
#include <optional>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "skillrec/error.hpp"

namespace skillrec {

using nlohmann::json;

namespace {

std::optional<EmbeddingVector> try_embed(const EmbeddingStore& store, const std::string& text) {
  try {
    EmbeddingVector v = store.embed(text);
    if (v.norm() == 0.0) {
      spdlog::warn("skipping skill '{}': zero embedding", text);
      return std::nullopt;
    }
    return v;
  } catch (const Error& e) {
    spdlog::warn("skipping skill '{}': {}", text, e.what());
    return std::nullopt;
  }
}

std::vector<std::string> taken_skill_union(const EnrollmentHistory& history, const Catalog& catalog) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& semester : history.semesters) {
    for (const auto& id : semester) {
      auto idx = catalog.index_of(id);
      if (!idx) continue;
      for (const auto& s : catalog[*idx].skills) {
        if (seen.insert(s.text).second) out.push_back(s.text);
      }
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> skill_texts(const Course& course) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& s : course.skills) {
    if (seen.insert(s.text).second) out.push_back(s.text);
  }
  return out;
}

std::vector<SkillMatch> match_skills(const std::vector<std::string>& target_skills,
                                     const std::vector<std::string>& taken_skills,
                                     const EmbeddingStore& store, double threshold) {
  std::vector<std::optional<EmbeddingVector>> taken_vecs;
  taken_vecs.reserve(taken_skills.size());
  for (const auto& t : taken_skills) taken_vecs.push_back(try_embed(store, t));

  std::vector<SkillMatch> matches;
  for (const auto& target : target_skills) {
    std::optional<EmbeddingVector> tv;
    bool resolved = false;
    for (std::size_t j = 0; j < taken_skills.size(); ++j) {
      if (target == taken_skills[j]) {
        matches.push_back({target, taken_skills[j], 1.0});
        continue;
      }
      if (!resolved) {
        tv = try_embed(store, target);
        resolved = true;
      }
      if (!tv || !taken_vecs[j] || tv->dim() != taken_vecs[j]->dim()) continue;
      const double sim = cosine(*tv, *taken_vecs[j]);
      if (sim > threshold) matches.push_back({target, taken_skills[j], sim});
    }
  }
  return matches;
}

SkillPartition partition_skills(const Course& target, const EnrollmentHistory& history,
                                const Catalog& catalog, const EmbeddingStore& store,
                                double threshold) {
  SkillPartition part;
  const auto target_skills = skill_texts(target);
  if (target_skills.empty()) {
    spdlog::warn("course {} has no extracted skills; explanation is empty", target.id);
    return part;
  }
  const auto taken = taken_skill_union(history, catalog);
  std::unordered_set<std::string> matched;
  for (const auto& m : match_skills(target_skills, taken, store, threshold)) matched.insert(m.target_skill);
  for (const auto& s : target_skills) {
    (matched.count(s) ? part.learned : part.fresh).push_back(s);
  }
  return part;
}

std::vector<RankedSkill> rank_skills(const std::vector<std::string>& skills, const Course& course,
                                     const EmbeddingStore& store) {
  std::vector<RankedSkill> ranked;
  if (skills.empty()) return ranked;
  // Without a description embedding every relevance is 0 and order is alphabetical.
  const auto desc = try_embed(store, course.description);
  for (const auto& s : skills) {
    auto v = desc ? try_embed(store, s) : std::nullopt;
    const double rel = v && v->dim() == desc->dim() ? std::clamp(cosine(*v, *desc), 0.0, 1.0) : 0.0;
    ranked.push_back({s, rel});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedSkill& a, const RankedSkill& b) {
    if (a.relevance != b.relevance) return a.relevance > b.relevance;
    return a.text < b.text;
  });
  return ranked;
}

Explanation build_explanation(const Course& target, const EnrollmentHistory& history,
                              const Catalog& catalog, const EmbeddingStore& store, std::size_t n,
                              double threshold) {
  const SkillPartition part = partition_skills(target, history, catalog, store, threshold);
  Explanation e;
  e.course_id = target.id;
  e.learned = rank_skills(part.learned, target, store);
  e.fresh = rank_skills(part.fresh, target, store);
  if (e.learned.size() > n) e.learned.resize(n);
  if (e.fresh.size() > n) e.fresh.resize(n);
  return e;
}

json to_json(const Explanation& e) {
  auto list = [](const std::vector<RankedSkill>& skills) {
    json out = json::array();
    for (const auto& s : skills) out.push_back(json{{"text", s.text}, {"relevance", s.relevance}});
    return out;
  };
  return json{{"course_id", e.course_id}, {"learned", list(e.learned)}, {"new", list(e.fresh)}};
}

Explanation explanation_from_json(const json& j) {
  auto list = [](const json& arr) {
    std::vector<RankedSkill> out;
    for (const auto& s : arr) out.push_back({s.at("text").get<std::string>(), s.at("relevance").get<double>()});
    return out;
  };
  return Explanation{j.at("course_id").get<std::string>(), list(j.at("learned")), list(j.at("new"))};
}

}  // namespace skillrec
