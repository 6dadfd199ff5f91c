#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace skillrec {

// Minimum whitespace-delimited word count for a description to be usable in
// recommendations. Shorter descriptions are kept in the catalog but never
// recommended.
inline constexpr std::size_t kMinDescriptionWords = 7;

/// An extracted concept: surface text over a token range, with the number of
/// base taggers that emitted it.
struct SkillSpan {
  std::string text;
  std::size_t token_start = 0;
  std::size_t token_end = 0;  // exclusive
  int votes = 1;

  friend bool operator==(const SkillSpan&, const SkillSpan&) = default;
};

struct Course {
  std::string id;
  std::string title;
  std::string department;
  std::string description;
  bool recommendable = false;
  std::vector<SkillSpan> skills;

  friend bool operator==(const Course&, const Course&) = default;
};

using Semester = std::vector<std::string>;

struct EnrollmentHistory {
  std::string student_id;
  std::vector<Semester> semesters;  // chronological
  std::vector<std::string> major;   // empty = undeclared

  friend bool operator==(const EnrollmentHistory&, const EnrollmentHistory&) = default;
};

enum class CatalogFormat { kJsonLines, kCsv };

CatalogFormat catalog_format_from_path(const std::filesystem::path& path);

std::size_t count_words(std::string_view text);
bool is_recommendable(std::string_view description);

/// Immutable-after-load course collection with id lookup. Insertion order is
/// preserved and defines course indices.
class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<Course> courses);

  std::size_t size() const { return courses_.size(); }
  bool empty() const { return courses_.empty(); }
  const std::vector<Course>& courses() const { return courses_; }
  const Course& operator[](std::size_t i) const { return courses_[i]; }

  std::optional<std::size_t> index_of(std::string_view id) const;
  bool contains(std::string_view id) const { return index_of(id).has_value(); }
  const Course& at(std::string_view id) const;

  // Replaces the skill list of one course; used by the extraction pipeline
  // before the catalog is frozen into an engine.
  void set_skills(std::size_t index, std::vector<SkillSpan> skills);

 private:
  std::vector<Course> courses_;
  std::unordered_map<std::string, std::size_t> index_;
};

Catalog load_catalog(const std::filesystem::path& path, CatalogFormat format);
Catalog load_catalog(const std::filesystem::path& path);
Catalog parse_catalog_jsonl(std::istream& in, const std::string& source = "<stream>");
Catalog parse_catalog_csv(std::istream& in, const std::string& source = "<stream>");

void save_catalog(const Catalog& catalog, const std::filesystem::path& path,
                  CatalogFormat format = CatalogFormat::kJsonLines);
void write_catalog_jsonl(const Catalog& catalog, std::ostream& out);
void write_catalog_csv(const Catalog& catalog, std::ostream& out);

std::vector<EnrollmentHistory> load_enrollments(const std::filesystem::path& path,
                                                const Catalog& catalog);
std::vector<EnrollmentHistory> parse_enrollments_jsonl(std::istream& in, const Catalog& catalog,
                                                       const std::string& source = "<stream>");
void save_enrollments(const std::vector<EnrollmentHistory>& histories,
                      const std::filesystem::path& path);
void write_enrollments_jsonl(const std::vector<EnrollmentHistory>& histories, std::ostream& out);

}  // namespace skillrec
