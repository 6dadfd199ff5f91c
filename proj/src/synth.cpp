#include "skillrec/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <unordered_set>

#include "skillrec/error.hpp"
#include "skillrec/text.hpp"

namespace skillrec {

using nlohmann::json;

namespace {

constexpr std::size_t kPhrasesPerCourse = 6;
constexpr std::size_t kSharedPhrasesPerCourse = 2;
constexpr double kDeclaredMajorRate = 0.85;

struct Theme {
  const char* code;
  std::array<const char*, 12> phrases;
};

// clang-format off
const std::array<Theme, 16> kThemes{{
  {"CS",   {"data structures", "graph algorithms", "dynamic programming", "operating systems", "compiler design",
            "hash tables", "recursion", "concurrency control", "object oriented design", "version control",
            "network protocols", "memory management"}},
  {"MATH", {"linear algebra", "real analysis", "group theory", "differential equations", "eigenvalues",
            "proof techniques", "number theory", "vector spaces", "multivariable calculus", "topology",
            "complex analysis", "combinatorics"}},
  {"STAT", {"hypothesis testing", "regression analysis", "bayesian inference", "sampling design",
            "maximum likelihood estimation", "time series analysis", "experimental design", "bootstrap methods",
            "survival analysis", "analysis of variance", "markov chains", "survey sampling"}},
  {"PHYS", {"classical mechanics", "electromagnetism", "quantum mechanics", "thermodynamics", "optics",
            "special relativity", "wave motion", "statistical mechanics", "circuit analysis", "fluid dynamics",
            "nuclear physics", "angular momentum"}},
  {"CHEM", {"organic synthesis", "reaction kinetics", "spectroscopy", "chemical equilibrium", "titration",
            "molecular orbital theory", "electrochemistry", "polymer chemistry", "stereochemistry",
            "chromatography", "acid base chemistry", "crystal structures"}},
  {"BIO",  {"cell biology", "gene expression", "population genetics", "protein folding", "evolutionary theory",
            "microbial ecology", "immune response", "signal transduction", "neuroanatomy", "dna replication",
            "plant physiology", "field sampling"}},
  {"ECON", {"supply and demand", "game theory", "market equilibrium", "monetary policy", "econometrics",
            "consumer choice", "labor markets", "international trade", "public finance", "cost benefit analysis",
            "economic growth models", "price discrimination"}},
  {"PSYC", {"cognitive development", "social cognition", "behavioral conditioning", "memory research",
            "personality theory", "perception", "clinical assessment", "research ethics", "developmental psychology",
            "emotion regulation", "attention and working memory", "psychometrics"}},
  {"HIST", {"archival research", "colonial history", "industrial revolution", "historiography", "oral history",
            "cold war politics", "medieval europe", "primary source analysis", "ancient civilizations",
            "labor history", "revolutionary movements", "imperial expansion"}},
  {"ENGL", {"literary criticism", "close reading", "creative writing", "rhetorical analysis", "poetry",
            "narrative theory", "victorian literature", "postcolonial literature", "argumentative writing",
            "drama", "literary modernism", "editing and revision"}},
  {"ART",  {"figure drawing", "color theory", "printmaking", "sculpture", "art history", "digital illustration",
            "composition", "studio critique", "ceramics", "visual culture", "portfolio development",
            "perspective drawing"}},
  {"MUS",  {"music theory", "ear training", "counterpoint", "orchestration", "sight singing", "harmony",
            "music history", "ensemble performance", "audio production", "rhythm", "jazz improvisation",
            "songwriting"}},
  {"PHIL", {"formal logic", "ethics", "epistemology", "metaphysics", "philosophy of mind", "political philosophy",
            "argument analysis", "existentialism", "moral reasoning", "philosophy of science", "aesthetics",
            "ancient philosophy"}},
  {"LING", {"phonology", "syntax", "morphology", "semantics", "language acquisition", "sociolinguistics",
            "phonetic transcription", "historical linguistics", "discourse analysis", "corpus linguistics",
            "pragmatics", "field methods"}},
  {"GEOG", {"geographic information systems", "remote sensing", "urban planning", "cartography", "climate systems",
            "spatial analysis", "land use", "hydrology", "population geography", "environmental policy",
            "geomorphology", "map projections"}},
  {"SOC",  {"social stratification", "qualitative interviewing", "network analysis", "urban sociology",
            "social movements", "ethnography", "gender studies", "criminology", "demography", "migration studies",
            "organizational behavior", "content analysis"}},
}};

const std::array<const char*, 16> kSharedPhrases{
    "technical writing", "data visualization", "public speaking", "critical thinking", "teamwork",
    "statistical reasoning", "python programming", "literature review", "project management", "peer review",
    "quantitative reasoning", "ethical reasoning", "spreadsheet modeling", "scientific writing",
    "problem solving", "information literacy"};
// clang-format on

const std::array<const char*, 4> kShortDescriptions{"Independent study.", "Thesis research.",
                                                      "Supervised fieldwork placement.", "Directed reading."};

// Templates with six phrase slots, marked by '@'.
const std::array<const char*, 4> kTemplates{
    "This course introduces @ and @. Topics include @, @ and @. Emphasis is placed on @.",
    "An overview of @ with applications to @. We cover @ and @, then turn to @ and @.",
    "Covers @, @ and @. Later units address @ as well as @ and @.",
    "Participants practice @ and @ through weekly projects. Additional material spans @, @, @ and @.",
};

std::string department_code(std::size_t d) {
  if (d < kThemes.size()) return kThemes[d].code;
  return (d < 10 ? "D0" : "D") + std::to_string(d);
}

const Theme& theme_of(std::size_t d) { return kThemes[d % kThemes.size()]; }

std::string capitalize(std::string s) {
  bool start = true;
  for (char& c : s) {
    if (start && c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    start = c == ' ';
  }
  return s;
}

std::string title_for(const std::string& phrase, std::size_t level) {
  const std::string p = capitalize(phrase);
  switch (level) {
    case 1: return "Foundations of " + p;
    case 2: return p;
    case 3: return "Topics in " + p;
    default: return "Advanced " + p;
  }
}

template <class T>
std::size_t pick(std::mt19937_64& rng, const T& container) {
  std::uniform_int_distribution<std::size_t> u(0, container.size() - 1);
  return u(rng);
}

struct Description {
  std::string text;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
};

Description compose(std::mt19937_64& rng, std::size_t dept) {
  const Theme& theme = theme_of(dept);
  std::vector<std::string> own(theme.phrases.begin(), theme.phrases.end());
  std::vector<std::string> shared(kSharedPhrases.begin(), kSharedPhrases.end());
  std::shuffle(own.begin(), own.end(), rng);
  std::shuffle(shared.begin(), shared.end(), rng);
  std::vector<std::string> chosen(own.begin(), own.begin() + (kPhrasesPerCourse - kSharedPhrasesPerCourse));
  chosen.insert(chosen.end(), shared.begin(), shared.begin() + kSharedPhrasesPerCourse);
  std::shuffle(chosen.begin(), chosen.end(), rng);

  const std::string tmpl = kTemplates[pick(rng, kTemplates)];
  Description d;
  std::vector<std::pair<std::size_t, std::size_t>> char_ranges;
  std::size_t slot = 0;
  for (char c : tmpl) {
    if (c == '@') {
      const std::size_t begin = d.text.size();
      d.text += chosen[slot++];
      char_ranges.emplace_back(begin, d.text.size());
    } else {
      d.text += c;
    }
  }
  const TokenizedText tt = tokenize(d.text, CasingMode::kCased);
  for (const auto& [cb, ce] : char_ranges) {
    std::size_t tb = tt.size(), te = tt.size();
    for (std::size_t i = 0; i < tt.size(); ++i) {
      if (tt.char_offsets[i].first == cb) tb = i;
      if (tt.char_offsets[i].second == ce) te = i + 1;
    }
    d.spans.emplace_back(tb, te);
  }
  return d;
}

}  // namespace

SyntheticCorpus synth_generate(const SyntheticSpec& spec) {
  if (spec.n_departments == 0 || spec.n_courses == 0 || spec.n_semesters == 0)
    throw ValidationError("department, course and semester counts must be positive");
  const std::size_t reserved = 3 * spec.n_rules;
  if (reserved + spec.n_departments > spec.n_courses)
    throw ValidationError("infeasible spec: " + std::to_string(spec.n_rules) + " rules need " +
                          std::to_string(reserved) + " reserved courses plus one per department, but only " +
                          std::to_string(spec.n_courses) + " courses exist");
  if (spec.n_rules > 0 && spec.n_semesters < 2)
    throw ValidationError("planted rules need at least two semesters");
  if (!(spec.carrier_rate > 0.0 && spec.carrier_rate <= 1.0))
    throw ValidationError("carrier_rate must be in (0, 1]");

  std::mt19937_64 rng(spec.seed);
  const std::size_t n_dept = spec.n_departments;
  const std::size_t n_sem = spec.n_semesters;

  std::vector<Course> courses;
  SyntheticCorpus out;
  std::set<std::string> gazetteer(kSharedPhrases.begin(), kSharedPhrases.end());
  for (std::size_t d = 0; d < n_dept; ++d) gazetteer.insert(theme_of(d).phrases.begin(), theme_of(d).phrases.end());

  // Regular courses: round-robin over departments, levels cycling 1..n_sem.
  std::vector<std::vector<std::vector<std::size_t>>> by_level(n_dept, std::vector<std::vector<std::size_t>>(n_sem));
  std::vector<std::size_t> per_dept_count(n_dept, 0);
  const std::size_t n_regular = spec.n_courses - reserved;
  std::vector<std::size_t> regular;
  for (std::size_t j = 0; j < n_regular; ++j) {
    const std::size_t dept = j % n_dept;
    const std::size_t level = (j / n_dept) % n_sem + 1;
    const std::size_t seq = ++per_dept_count[dept];
    Course c;
    c.id = department_code(dept) + std::to_string(std::min<std::size_t>(level, 9) * 100 + seq);
    c.department = department_code(dept);
    Description desc = compose(rng, dept);
    c.title = title_for(theme_of(dept).phrases[pick(rng, theme_of(dept).phrases)], level);
    std::bernoulli_distribution short_desc(spec.short_description_rate);
    if (short_desc(rng)) {
      c.description = kShortDescriptions[pick(rng, kShortDescriptions)];
      out.gold[c.id] = {};
    } else {
      c.description = desc.text;
      out.gold[c.id] = desc.spans;
    }
    c.recommendable = is_recommendable(c.description);
    by_level[dept][level - 1].push_back(courses.size());
    regular.push_back(courses.size());
    courses.push_back(std::move(c));
  }

  // Reserved courses: A, B and C of each rule spread over three departments.
  std::vector<std::array<std::size_t, 3>> rule_courses;
  for (std::size_t r = 0; r < spec.n_rules; ++r) {
    std::array<std::size_t, 3> idx{};
    for (std::size_t k = 0; k < 3; ++k) {
      const std::size_t dept = (3 * r + k) % n_dept;
      Course c;
      c.id = department_code(dept) + std::to_string(500 + 3 * r + k);
      c.department = department_code(dept);
      const Description desc = compose(rng, dept);
      c.title = "Special Topics: " + capitalize(theme_of(dept).phrases[pick(rng, theme_of(dept).phrases)]);
      c.description = desc.text;
      c.recommendable = is_recommendable(c.description);
      out.gold[c.id] = desc.spans;
      idx[k] = courses.size();
      courses.push_back(std::move(c));
    }
    out.rules.push_back({{courses[idx[0]].id, courses[idx[1]].id}, courses[idx[2]].id});
    rule_courses.push_back(idx);
  }

  // Students.
  const std::size_t n_students = spec.n_students;
  std::vector<std::vector<std::vector<std::size_t>>> plan(n_students, std::vector<std::vector<std::size_t>>(n_sem));
  std::vector<std::size_t> home(n_students);
  std::vector<bool> declared(n_students);
  std::bernoulli_distribution declare(kDeclaredMajorRate);
  std::uniform_int_distribution<std::size_t> dept_dist(0, n_dept - 1);
  for (std::size_t s = 0; s < n_students; ++s) {
    home[s] = dept_dist(rng);
    declared[s] = declare(rng);
    std::unordered_set<std::size_t> taken;
    for (std::size_t sem = 0; sem < n_sem; ++sem) {
      std::vector<std::size_t> pool = by_level[home[s]][sem];
      std::shuffle(pool.begin(), pool.end(), rng);
      std::size_t added = 0;
      for (std::size_t c : pool) {
        if (added == 2) break;
        if (taken.insert(c).second) {
          plan[s][sem].push_back(c);
          ++added;
        }
      }
      if (n_dept > 1) {
        std::vector<std::size_t> electives;
        for (std::size_t c : regular) {
          if (courses[c].department != department_code(home[s]) && !taken.count(c)) electives.push_back(c);
        }
        if (!electives.empty()) {
          const std::size_t c = electives[pick(rng, electives)];
          taken.insert(c);
          plan[s][sem].push_back(c);
        }
      }
    }
  }

  // Rule carriers: a fixed count per rule, so every rule is realized in at
  // least carrier_rate of students.
  const auto carriers_per_rule =
      static_cast<std::size_t>(std::ceil(spec.carrier_rate * static_cast<double>(n_students)));
  std::uniform_int_distribution<std::size_t> early(0, n_sem >= 2 ? n_sem - 2 : 0);
  std::uniform_int_distribution<std::size_t> any_sem(0, n_sem - 1);
  std::bernoulli_distribution decoy(spec.decoy_rate);
  std::bernoulli_distribution coin(0.5);
  for (const auto& idx : rule_courses) {
    std::vector<std::size_t> order(n_students);
    for (std::size_t s = 0; s < n_students; ++s) order[s] = s;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n_students; ++i) {
      const std::size_t s = order[i];
      if (i < carriers_per_rule) {
        plan[s][early(rng)].push_back(idx[0]);
        plan[s][early(rng)].push_back(idx[1]);
        plan[s][n_sem - 1].push_back(idx[2]);
      } else if (decoy(rng)) {
        plan[s][any_sem(rng)].push_back(coin(rng) ? idx[0] : idx[1]);
      }
    }
  }

  char sid[32];
  for (std::size_t s = 0; s < n_students; ++s) {
    std::snprintf(sid, sizeof sid, "S%04zu", s + 1);
    EnrollmentHistory h;
    h.student_id = sid;
    if (declared[s]) h.major = {department_code(home[s])};
    for (const auto& sem : plan[s]) {
      Semester ids;
      for (std::size_t c : sem) ids.push_back(courses[c].id);
      std::sort(ids.begin(), ids.end());
      if (!ids.empty()) h.semesters.push_back(std::move(ids));
    }
    out.histories.push_back(std::move(h));
  }

  out.catalog = Catalog(std::move(courses));
  out.gazetteer.assign(gazetteer.begin(), gazetteer.end());
  return out;
}

bool rule_realized(const PlantedRule& rule, const EnrollmentHistory& history) {
  std::optional<std::size_t> consequent_last;
  for (std::size_t s = 0; s < history.semesters.size(); ++s) {
    const auto& sem = history.semesters[s];
    if (std::find(sem.begin(), sem.end(), rule.consequent) != sem.end()) consequent_last = s;
  }
  if (!consequent_last) return false;
  for (const auto& a : rule.antecedents) {
    bool before = false;
    for (std::size_t s = 0; s < *consequent_last && !before; ++s) {
      const auto& sem = history.semesters[s];
      before = std::find(sem.begin(), sem.end(), a) != sem.end();
    }
    if (!before) return false;
  }
  return true;
}

double realization_rate(const PlantedRule& rule, const std::vector<EnrollmentHistory>& histories) {
  if (histories.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& h : histories) n += rule_realized(rule, h);
  return static_cast<double>(n) / static_cast<double>(histories.size());
}

json to_json(const PlantedRule& rule) {
  return json{{"antecedents", rule.antecedents}, {"consequent", rule.consequent}};
}

std::vector<PlantedRule> load_planted_rules(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open rules file: " + path.string());
  std::vector<PlantedRule> rules;
  try {
    const json j = json::parse(in);
    for (const auto& r : j.at("rules")) {
      rules.push_back({r.at("antecedents").get<std::vector<std::string>>(), r.at("consequent").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 1, e.what());
  }
  return rules;
}

void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_catalog(corpus.catalog, dir / "catalog.jsonl");
  save_enrollments(corpus.histories, dir / "enrollments.jsonl");
  save_gold_annotations(corpus.gold, dir / "gold.jsonl");
  {
    std::ofstream out(dir / "gazetteer.txt", std::ios::binary);
    for (const auto& p : corpus.gazetteer) out << p << '\n';
  }
  json rules = json::array();
  for (const auto& r : corpus.rules) rules.push_back(to_json(r));
  std::ofstream out(dir / "rules.json", std::ios::binary);
  out << json{{"rules", rules}}.dump(2) << '\n';
  if (!out) throw Error("io", "failed writing " + (dir / "rules.json").string());
}

}  // namespace skillrec
