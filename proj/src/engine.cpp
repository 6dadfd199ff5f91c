#include "skillrec/engine.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

#include "skillrec/error.hpp"

namespace skillrec {

using nlohmann::json;

const EnrollmentHistory* EngineState::find_student(std::string_view id) const {
  auto it = student_index.find(std::string(id));
  return it == student_index.end() ? nullptr : &histories[it->second];
}

std::shared_ptr<const EngineState> make_engine(std::shared_ptr<const Catalog> catalog,
                                               std::vector<EnrollmentHistory> histories,
                                               std::shared_ptr<const TrainedModel> model,
                                               std::shared_ptr<const EmbeddingStore> store, Config config,
                                               std::shared_ptr<const CourseScorer> scorer,
                                               std::vector<SequenceTagger> taggers) {
  if (!catalog) throw ValidationError("engine needs a catalog");
  if (!store) throw ValidationError("engine needs an embedding store");
  auto state = std::make_shared<EngineState>();
  state->catalog = std::move(catalog);
  state->histories = std::move(histories);
  for (std::size_t i = 0; i < state->histories.size(); ++i) {
    state->student_index.emplace(state->histories[i].student_id, i);
  }
  state->model = std::move(model);
  state->store = std::move(store);
  state->config = std::move(config);
  state->taggers = std::move(taggers);
  if (scorer) {
    state->scorer = std::move(scorer);
  } else if (state->model) {
    state->scorer = std::make_shared<ModelScorer>(state->model, *state->catalog);
  } else {
    throw ValidationError("engine needs a trained model or a scorer");
  }
  return state;
}

std::shared_ptr<const EngineState> load_engine(const Config& config) {
  const auto& dir = config.data_dir;
  Catalog catalog = load_catalog(dir / "catalog.jsonl");
  auto histories = load_enrollments(dir / "enrollments.jsonl", catalog);
  auto model = std::make_shared<const TrainedModel>(TrainedModel::load(dir / "model.json"));

  std::vector<SequenceTagger> taggers;
  if (std::filesystem::is_directory(dir)) {
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("tagger", 0) == 0 && entry.path().extension() == ".json") paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) taggers.push_back(SequenceTagger::load(p));
  }
  if (!taggers.empty()) {
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      if (!catalog[i].skills.empty()) continue;
      catalog.set_skills(i, extract_skills(catalog[i], taggers, default_stoplist()));
    }
  }
  spdlog::info("engine loaded: {} courses, {} students, {} taggers", catalog.size(), histories.size(),
               taggers.size());
  return make_engine(std::make_shared<const Catalog>(std::move(catalog)), std::move(histories), std::move(model),
                     make_embedding_store(config.embedding), config, nullptr, std::move(taggers));
}

RecommendationPayload recommend(const EngineState& engine, const EnrollmentHistory& history, Condition condition,
                                std::uint64_t seed) {
  const Catalog& catalog = *engine.catalog;
  const auto scored = score_candidates(*engine.scorer, history, catalog);
  const auto list = diversify(scored, engine.config.k);

  RecommendationPayload p;
  p.student_id = history.student_id;
  p.condition = condition;
  p.seed = seed;
  for (std::size_t i = 0; i < list.entries.size(); ++i) {
    const auto& s = list.entries[i];
    const Course& c = catalog.at(s.course_id);
    RecommendationEntry e;
    e.rank = i + 1;
    e.course_id = c.id;
    e.title = c.title;
    e.department = c.department;
    e.description = c.description;
    e.score = s.score;
    if (condition == Condition::kExp) {
      e.explanation = build_explanation(c, history, catalog, *engine.store, engine.config.explanation_size,
                                        engine.config.threshold);
    }
    p.entries.push_back(std::move(e));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(p.entries.begin(), p.entries.end(), rng);
  return p;
}

EnrollmentHistory with_added_semester(const EngineState& engine, const EnrollmentHistory& history,
                                      const std::vector<std::string>& added) {
  EnrollmentHistory h = history;
  if (added.empty()) return h;
  Semester sem;
  for (const auto& id : added) {
    if (!engine.catalog->contains(id)) throw NotFoundError("unknown course id: " + id);
    if (std::find(sem.begin(), sem.end(), id) == sem.end()) sem.push_back(id);
  }
  h.semesters.push_back(std::move(sem));
  return h;
}

json course_to_json(const Course& c) {
  json skills = json::array();
  for (const auto& s : c.skills) skills.push_back(s.text);
  return json{{"id", c.id},
              {"title", c.title},
              {"department", c.department},
              {"description", c.description},
              {"recommendable", c.recommendable},
              {"skills", skills}};
}

json to_json(const RecommendationPayload& p) {
  json entries = json::array();
  for (const auto& e : p.entries) {
    json j{{"rank", e.rank},
           {"course_id", e.course_id},
           {"title", e.title},
           {"department", e.department},
           {"description", e.description},
           {"score", e.score}};
    if (e.explanation) {
      const json ex = to_json(*e.explanation);
      j["explanation"] = json{{"learned", ex.at("learned")}, {"new", ex.at("new")}};
    }
    entries.push_back(std::move(j));
  }
  return json{{"student_id", p.student_id},
              {"condition", to_string(p.condition)},
              {"seed", p.seed},
              {"entries", entries}};
}

// ---------------------------------------------------------------------------

FeedbackStore::FeedbackStore(std::filesystem::path path, std::size_t compact_every)
    : path_(std::move(path)), compact_every_(compact_every) {
  replay();
}

void FeedbackStore::replay() {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SurveyResponse r;
    try {
      r = survey_response_from_json(json::parse(line));
    } catch (const json::parse_error& e) {
      // A torn final line from an interrupted append is dropped; anything
      // earlier is corruption.
      if (in.peek() == std::char_traits<char>::eof()) {
        spdlog::warn("{}:{}: dropping truncated feedback record", path_.string(), line_no);
        break;
      }
      throw ParseError(path_.string(), line_no, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(path_.string(), line_no, e.what());
    }
    records_[{r.participant_id, r.course_id, r.condition}] = std::move(r);
  }
}

bool FeedbackStore::upsert(const SurveyResponse& r) {
  if (const auto issue = validate(r); issue != SurveyIssue::kNone) throw ValidationError(describe(issue));
  std::lock_guard lock(mutex_);
  const bool replaced = !records_.insert_or_assign({r.participant_id, r.course_id, r.condition}, r).second;
  if (!path_.parent_path().empty()) std::filesystem::create_directories(path_.parent_path());
  {
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    out << to_json(r).dump() << '\n';
    out.flush();
    if (!out) throw Error("io", "failed appending to " + path_.string());
  }
  if (compact_every_ && ++appends_since_compaction_ >= compact_every_) rewrite_locked();
  return replaced;
}

std::vector<SurveyResponse> FeedbackStore::all() const {
  std::lock_guard lock(mutex_);
  std::vector<SurveyResponse> out;
  out.reserve(records_.size());
  for (const auto& [key, r] : records_) out.push_back(r);
  return out;
}

std::size_t FeedbackStore::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

void FeedbackStore::compact() {
  std::lock_guard lock(mutex_);
  rewrite_locked();
}

void FeedbackStore::rewrite_locked() {
  auto tmp = path_;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    for (const auto& [key, r] : records_) out << to_json(r).dump() << '\n';
    out.flush();
    if (!out) throw Error("io", "failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path_);
  appends_since_compaction_ = 0;
}

}  // namespace skillrec
