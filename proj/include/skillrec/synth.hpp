#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "skillrec/catalog.hpp"
#include "skillrec/tagger.hpp"

namespace skillrec {

struct PlantedRule {
  std::vector<std::string> antecedents;
  std::string consequent;

  friend bool operator==(const PlantedRule&, const PlantedRule&) = default;
};

struct SyntheticSpec {
  std::size_t n_departments = 12;
  std::size_t n_courses = 120;
  std::size_t n_students = 300;
  std::size_t n_semesters = 4;
  std::size_t n_rules = 6;  // each rule is {A, B} -> C over reserved courses
  std::uint64_t seed = 1;
  // Fraction of students that carry each rule; a carrier always realizes it.
  double carrier_rate = 0.4;
  // Fraction of non-carriers that take one antecedent alone.
  double decoy_rate = 0.15;
  double short_description_rate = 0.05;
};

struct SyntheticCorpus {
  Catalog catalog;
  std::vector<EnrollmentHistory> histories;
  GoldAnnotations gold;                // token ranges of vocabulary phrases
  std::vector<std::string> gazetteer;  // every vocabulary phrase, sorted
  std::vector<PlantedRule> rules;
};

/// Pure function of the spec. Throws ValidationError when counts are zero,
/// the rules need more courses than exist, or rules are requested with fewer
/// than two semesters.
SyntheticCorpus synth_generate(const SyntheticSpec& spec);

/// Every antecedent taken in a semester strictly before one containing the
/// consequent.
bool rule_realized(const PlantedRule& rule, const EnrollmentHistory& history);
double realization_rate(const PlantedRule& rule, const std::vector<EnrollmentHistory>& histories);

nlohmann::json to_json(const PlantedRule& rule);
std::vector<PlantedRule> load_planted_rules(const std::filesystem::path& path);

/// Writes catalog.jsonl, enrollments.jsonl, gold.jsonl, gazetteer.txt and
/// rules.json into `dir`, creating it if needed.
void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace skillrec
