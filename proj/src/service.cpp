#include "skillrec/service.hpp"

#include <charconv>

#include <spdlog/spdlog.h>

#include "httplib.h"
#include "skillrec/error.hpp"

namespace skillrec {

using nlohmann::json;

namespace {

Reply error_reply(int status, const std::string& kind, const std::string& message) {
  return {status, json{{"error", kind}, {"message", message}}};
}

Reply not_ready() { return error_reply(503, "not_ready", "engine is not loaded"); }

std::optional<std::uint64_t> parse_seed(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

void send(httplib::Response& res, const Reply& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

}  // namespace

Service::Service(std::shared_ptr<FeedbackStore> feedback) : feedback_(std::move(feedback)) {
  if (!feedback_) throw ValidationError("service needs a feedback store");
}

void Service::set_engine(std::shared_ptr<const EngineState> engine) {
  std::lock_guard lock(engine_mutex_);
  engine_ = std::move(engine);
}

std::shared_ptr<const EngineState> Service::engine() const {
  std::lock_guard lock(engine_mutex_);
  return engine_;
}

Reply Service::health() const {
  const auto e = engine();
  return {200, json{{"status", e ? "ready" : "loading"},
                    {"courses", e ? e->catalog->size() : 0},
                    {"students", e ? e->histories.size() : 0},
                    {"feedback_records", feedback_->size()}}};
}

Reply Service::recommendations(std::string_view student_id, const std::map<std::string, std::string>& query) const {
  const auto e = engine();
  if (!e) return not_ready();
  Condition condition = Condition::kExp;
  if (auto it = query.find("condition"); it != query.end()) {
    const auto c = condition_from_string(it->second);
    if (!c) return error_reply(400, "invalid", "condition must be 'exp' or 'no-exp'");
    condition = *c;
  }
  std::uint64_t seed = 0;
  if (auto it = query.find("seed"); it != query.end()) {
    const auto s = parse_seed(it->second);
    if (!s) return error_reply(400, "invalid", "seed must be a non-negative integer");
    seed = *s;
  }
  const EnrollmentHistory* h = e->find_student(student_id);
  if (!h) return error_reply(404, "not_found", "unknown student: " + std::string(student_id));
  return {200, to_json(recommend(*e, *h, condition, seed))};
}

Reply Service::whatif(std::string_view body) const {
  const auto e = engine();
  if (!e) return not_ready();
  std::string student_id;
  std::vector<std::string> added;
  Condition condition = Condition::kExp;
  std::uint64_t seed = 0;
  try {
    const json j = json::parse(body);
    student_id = j.at("student_id").get<std::string>();
    if (j.contains("added_courses")) added = j.at("added_courses").get<std::vector<std::string>>();
    if (j.contains("condition")) {
      const auto c = condition_from_string(j.at("condition").get<std::string>());
      if (!c) return error_reply(400, "invalid", "condition must be 'exp' or 'no-exp'");
      condition = *c;
    }
    if (j.contains("seed")) seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& ex) {
    return error_reply(400, "invalid", std::string("malformed what-if request: ") + ex.what());
  }
  const EnrollmentHistory* h = e->find_student(student_id);
  if (!h) return error_reply(404, "not_found", "unknown student: " + student_id);
  try {
    const auto augmented = with_added_semester(*e, *h, added);
    return {200, to_json(recommend(*e, augmented, condition, seed))};
  } catch (const NotFoundError& ex) {
    return error_reply(400, "invalid", ex.what());
  }
}

Reply Service::feedback(std::string_view body) {
  SurveyResponse r;
  try {
    r = survey_response_from_json(json::parse(body));
  } catch (const json::exception& ex) {
    return error_reply(400, "invalid", std::string("malformed feedback: ") + ex.what());
  } catch (const ValidationError& ex) {
    return error_reply(422, "invalid", ex.what());
  }
  switch (validate(r)) {
    case SurveyIssue::kNone: break;
    case SurveyIssue::kMalformedRating: return error_reply(422, "invalid", describe(SurveyIssue::kMalformedRating));
    case SurveyIssue::kConditionMismatch:
      return error_reply(409, "conflict", describe(SurveyIssue::kConditionMismatch));
  }
  try {
    const bool replaced = feedback_->upsert(r);
    return {200, json{{"status", "ok"}, {"replaced", replaced}}};
  } catch (const Error& ex) {
    spdlog::error("feedback write failed: {}", ex.what());
    return error_reply(500, ex.kind(), ex.what());
  }
}

Reply Service::course(std::string_view id) const {
  const auto e = engine();
  if (!e) return not_ready();
  const auto idx = e->catalog->index_of(id);
  if (!idx) return error_reply(404, "not_found", "unknown course: " + std::string(id));
  return {200, course_to_json((*e->catalog)[*idx])};
}

Reply Service::courses() const {
  const auto e = engine();
  if (!e) return not_ready();
  json list = json::array();
  for (const auto& c : e->catalog->courses()) {
    list.push_back(json{{"id", c.id}, {"title", c.title}, {"department", c.department}});
  }
  return {200, json{{"courses", list}}};
}

Reply Service::student(std::string_view id) const {
  const auto e = engine();
  if (!e) return not_ready();
  const EnrollmentHistory* h = e->find_student(id);
  if (!h) return error_reply(404, "not_found", "unknown student: " + std::string(id));
  return {200, json{{"student_id", h->student_id}, {"semesters", h->semesters}, {"major", h->major}}};
}

void Service::mount(httplib::Server& server, const std::filesystem::path& static_dir) {
  server.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) { send(res, health()); });
  server.Get(R"(/api/students/([^/]+)/recommendations)", [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    send(res, recommendations(req.matches[1].str(), query));
  });
  server.Get(R"(/api/students/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, student(req.matches[1].str()));
  });
  server.Get("/api/courses", [this](const httplib::Request&, httplib::Response& res) { send(res, courses()); });
  server.Get(R"(/api/courses/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, course(req.matches[1].str()));
  });
  server.Post("/api/whatif", [this](const httplib::Request& req, httplib::Response& res) { send(res, whatif(req.body)); });
  server.Post("/api/feedback",
              [this](const httplib::Request& req, httplib::Response& res) { send(res, feedback(req.body)); });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    Reply r = error_reply(500, "internal", "unexpected error");
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      r = error_reply(500, e.kind(), e.what());
    } catch (const std::exception& e) {
      r = error_reply(500, "internal", e.what());
    } catch (...) {
    }
    send(res, r);
  });
  if (!static_dir.empty() && !server.set_mount_point("/", static_dir.string())) {
    throw NotFoundError("static directory not found: " + static_dir.string());
  }
}

void run_server(Service& service, const std::string& host, int port, const std::filesystem::path& static_dir) {
  httplib::Server server;
  service.mount(server, static_dir);
  spdlog::info("listening on {}:{}", host, port);
  if (!server.listen(host, port)) throw Error("io", "cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace skillrec
