#include "skillrec/catalog.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "skillrec/error.hpp"

namespace skillrec {

using nlohmann::json;

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_blank(std::string_view line) {
  for (char c : line) {
    if (!is_space(c)) return false;
  }
  return true;
}

std::string required_string(const json& row, const char* key, const std::string& source,
                            std::size_t line) {
  auto it = row.find(key);
  if (it == row.end()) throw ParseError(source, line, std::string("missing key '") + key + "'");
  if (!it->is_string()) throw ParseError(source, line, std::string("key '") + key + "' must be a string");
  return it->get<std::string>();
}

std::vector<SkillSpan> parse_skills(const json& row, const std::string& source, std::size_t line) {
  std::vector<SkillSpan> skills;
  auto it = row.find("skills");
  if (it == row.end() || it->is_null()) return skills;
  if (!it->is_array()) throw ParseError(source, line, "'skills' must be an array");
  for (const auto& s : *it) {
    try {
      SkillSpan span;
      span.text = s.at("text").get<std::string>();
      span.token_start = s.at("token_start").get<std::size_t>();
      span.token_end = s.at("token_end").get<std::size_t>();
      span.votes = s.value("votes", 1);
      skills.push_back(std::move(span));
    } catch (const json::exception& e) {
      throw ParseError(source, line, std::string("bad skill entry: ") + e.what());
    }
  }
  return skills;
}

Course make_course(std::string id, std::string title, std::string department,
                   std::string description, const std::string& source, std::size_t line) {
  if (id.empty()) throw ParseError(source, line, "empty course id");
  if (department.empty()) throw ParseError(source, line, "empty department for course " + id);
  Course c;
  c.id = std::move(id);
  c.title = std::move(title);
  c.department = std::move(department);
  c.description = std::move(description);
  c.recommendable = is_recommendable(c.description);
  return c;
}

void check_unique(const std::vector<Course>& courses, const Course& c,
                  std::unordered_map<std::string, std::size_t>& seen) {
  if (!seen.emplace(c.id, courses.size()).second) {
    throw ValidationError("duplicate course id: " + c.id);
  }
}

json skill_to_json(const SkillSpan& s) {
  return json{{"text", s.text}, {"token_start", s.token_start}, {"token_end", s.token_end},
              {"votes", s.votes}};
}

// Splits one CSV record starting at the current stream position. Returns false
// at end of input. Handles quoted fields with embedded separators, newlines and
// doubled quotes.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line,
                     const std::string& source) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  const std::size_t start_line = line + 1;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      ++line;
      fields.push_back(std::move(field));
      return true;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (in_quotes) throw ParseError(source, start_line, "unterminated quoted field");
  if (!any) return false;
  ++line;
  fields.push_back(std::move(field));
  return true;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::size_t count_words(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++words;
    }
  }
  return words;
}

bool is_recommendable(std::string_view description) {
  return count_words(description) >= kMinDescriptionWords;
}

CatalogFormat catalog_format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? CatalogFormat::kCsv : CatalogFormat::kJsonLines;
}

Catalog::Catalog(std::vector<Course> courses) : courses_(std::move(courses)) {
  for (std::size_t i = 0; i < courses_.size(); ++i) {
    if (courses_[i].id.empty()) throw ValidationError("empty course id");
    if (courses_[i].department.empty())
      throw ValidationError("empty department for course " + courses_[i].id);
    if (!index_.emplace(courses_[i].id, i).second)
      throw ValidationError("duplicate course id: " + courses_[i].id);
  }
}

std::optional<std::size_t> Catalog::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Course& Catalog::at(std::string_view id) const {
  auto idx = index_of(id);
  if (!idx) throw NotFoundError("unknown course id: " + std::string(id));
  return courses_[*idx];
}

void Catalog::set_skills(std::size_t index, std::vector<SkillSpan> skills) {
  courses_.at(index).skills = std::move(skills);
}

Catalog parse_catalog_jsonl(std::istream& in, const std::string& source) {
  std::vector<Course> courses;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, line_no, e.what());
    }
    if (!row.is_object()) throw ParseError(source, line_no, "expected a JSON object");
    Course c = make_course(required_string(row, "id", source, line_no),
                           required_string(row, "title", source, line_no),
                           required_string(row, "department", source, line_no),
                           required_string(row, "description", source, line_no), source, line_no);
    c.skills = parse_skills(row, source, line_no);
    check_unique(courses, c, seen);
    courses.push_back(std::move(c));
  }
  return Catalog(std::move(courses));
}

Catalog parse_catalog_csv(std::istream& in, const std::string& source) {
  std::vector<std::string> fields;
  std::size_t line = 0;
  if (!read_csv_record(in, fields, line, source)) return Catalog{};
  if (!fields.empty() && fields[0].rfind("\xEF\xBB\xBF", 0) == 0) fields[0].erase(0, 3);

  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < fields.size(); ++i) column[fields[i]] = i;
  for (const char* key : {"id", "title", "department", "description"}) {
    if (!column.count(key)) throw ParseError(source, 1, std::string("missing column '") + key + "'");
  }

  std::vector<Course> courses;
  std::unordered_map<std::string, std::size_t> seen;
  while (true) {
    const std::size_t record_line = line + 1;
    if (!read_csv_record(in, fields, line, source)) break;
    if (fields.size() == 1 && is_blank(fields[0])) continue;
    if (fields.size() != column.size()) {
      throw ParseError(source, record_line,
                       "expected " + std::to_string(column.size()) + " fields, got " +
                           std::to_string(fields.size()));
    }
    Course c = make_course(fields[column["id"]], fields[column["title"]],
                           fields[column["department"]], fields[column["description"]], source,
                           record_line);
    check_unique(courses, c, seen);
    courses.push_back(std::move(c));
  }
  return Catalog(std::move(courses));
}

Catalog load_catalog(const std::filesystem::path& path, CatalogFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open catalog: " + path.string());
  return format == CatalogFormat::kCsv ? parse_catalog_csv(in, path.string())
                                       : parse_catalog_jsonl(in, path.string());
}

Catalog load_catalog(const std::filesystem::path& path) {
  return load_catalog(path, catalog_format_from_path(path));
}

void write_catalog_jsonl(const Catalog& catalog, std::ostream& out) {
  for (const auto& c : catalog.courses()) {
    json row{{"id", c.id}, {"title", c.title}, {"department", c.department},
             {"description", c.description}};
    if (!c.skills.empty()) {
      json skills = json::array();
      for (const auto& s : c.skills) skills.push_back(skill_to_json(s));
      row["skills"] = std::move(skills);
    }
    out << row.dump() << '\n';
  }
}

void write_catalog_csv(const Catalog& catalog, std::ostream& out) {
  out << "id,title,department,description\n";
  for (const auto& c : catalog.courses()) {
    out << csv_escape(c.id) << ',' << csv_escape(c.title) << ',' << csv_escape(c.department) << ','
        << csv_escape(c.description) << '\n';
  }
}

void save_catalog(const Catalog& catalog, const std::filesystem::path& path, CatalogFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write catalog: " + path.string());
  if (format == CatalogFormat::kCsv) {
    write_catalog_csv(catalog, out);
  } else {
    write_catalog_jsonl(catalog, out);
  }
}

std::vector<EnrollmentHistory> parse_enrollments_jsonl(std::istream& in, const Catalog& catalog,
                                                       const std::string& source) {
  std::vector<EnrollmentHistory> histories;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, line_no, e.what());
    }
    EnrollmentHistory h;
    try {
      h.student_id = row.at("student_id").get<std::string>();
      if (row.contains("major") && !row["major"].is_null())
        h.major = row["major"].get<std::vector<std::string>>();
      h.semesters = row.at("semesters").get<std::vector<Semester>>();
    } catch (const json::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
    if (h.student_id.empty()) throw ParseError(source, line_no, "empty student_id");
    if (h.semesters.empty())
      throw ValidationError("student " + h.student_id + " has no semesters");
    for (std::size_t s = 0; s < h.semesters.size(); ++s) {
      if (h.semesters[s].empty()) {
        throw ValidationError("student " + h.student_id + " has an empty semester at index " +
                              std::to_string(s));
      }
      for (const auto& id : h.semesters[s]) {
        if (!catalog.contains(id)) {
          throw ValidationError("student " + h.student_id + " references unknown course id " + id);
        }
      }
    }
    if (!seen.emplace(h.student_id, histories.size()).second)
      throw ValidationError("duplicate student id: " + h.student_id);
    histories.push_back(std::move(h));
  }
  return histories;
}

std::vector<EnrollmentHistory> load_enrollments(const std::filesystem::path& path,
                                                const Catalog& catalog) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open enrollments: " + path.string());
  return parse_enrollments_jsonl(in, catalog, path.string());
}

void write_enrollments_jsonl(const std::vector<EnrollmentHistory>& histories, std::ostream& out) {
  for (const auto& h : histories) {
    json row{{"student_id", h.student_id}, {"major", h.major}, {"semesters", h.semesters}};
    out << row.dump() << '\n';
  }
}

void save_enrollments(const std::vector<EnrollmentHistory>& histories,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write enrollments: " + path.string());
  write_enrollments_jsonl(histories, out);
}

}  // namespace skillrec
