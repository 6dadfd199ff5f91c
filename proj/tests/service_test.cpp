#include <fstream>
#include <set>
#include <thread>

#include "doctest.h"
#include "engine_fixture.hpp"
#include "skillrec/service.hpp"
#include "support.hpp"
// After Eigen: resolv.h defines a _res macro.
#include "httplib.h"

using namespace skillrec;
using nlohmann::json;

namespace {

std::size_t rank_of(const std::vector<ScoredCourse>& scored, const std::string& id) {
  for (std::size_t i = 0; i < scored.size(); ++i)
    if (scored[i].course_id == id) return i;
  return scored.size();
}

bool took_any(const EnrollmentHistory& h, const PlantedRule& r) {
  for (const auto& sem : h.semesters)
    for (const auto& id : sem)
      if (id == r.antecedents[0] || id == r.antecedents[1] || id == r.consequent) return true;
  return false;
}

std::string feedback_body(const std::string& pid, const std::string& cond, json ratings) {
  json j{{"participant_id", pid}, {"course_id", "CS101"}, {"condition", cond}, {"major_declared", true}};
  for (std::size_t q = 0; q < ratings.size(); ++q) j["q" + std::to_string(q + 1)] = ratings[q];
  return j.dump();
}

void check_payload_contract(const json& body, bool explained) {
  const auto& entries = body.at("entries");
  CHECK(entries.size() == kDefaultRecommendations);
  std::set<std::string> depts;
  for (const auto& e : entries) {
    depts.insert(e.at("department").get<std::string>());
    CHECK(e.contains("explanation") == explained);
    if (explained) {
      CHECK(e.at("explanation").at("learned").size() <= kDefaultExplanationSize);
      CHECK(e.at("explanation").at("new").size() <= kDefaultExplanationSize);
    }
    CHECK(count_words(e.at("description").get<std::string>()) >= 7);
  }
  CHECK(depts.size() == entries.size());
}

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("requests before the engine is ready") {
    testing::TempDir dir;
    Service svc(std::make_shared<FeedbackStore>(dir / "fb.jsonl"));
    CHECK(svc.health().body.at("status") == "loading");
    CHECK(svc.recommendations("S0001", {}).status == 503);
    CHECK(svc.whatif(R"({"student_id":"S0001"})").status == 503);
    CHECK(svc.courses().status == 503);
  }

  TEST_CASE("recommendation payloads honour the condition") {
    const auto& f = testing::planted_fixture();
    testing::TempDir dir;
    Service svc(std::make_shared<FeedbackStore>(dir / "fb.jsonl"));
    svc.set_engine(f.engine);
    CHECK(svc.health().body.at("status") == "ready");
    for (std::size_t i = 0; i < 20; ++i) {
      const auto id = f.corpus.histories[i].student_id;
      const auto exp = svc.recommendations(id, {{"condition", "exp"}, {"seed", std::to_string(i)}});
      REQUIRE(exp.status == 200);
      check_payload_contract(exp.body, true);
      const auto plain = svc.recommendations(id, {{"condition", "no-exp"}, {"seed", std::to_string(i)}});
      REQUIRE(plain.status == 200);
      check_payload_contract(plain.body, false);
      std::set<std::string> a, b;
      for (const auto& e : exp.body.at("entries")) a.insert(e.at("course_id").get<std::string>());
      for (const auto& e : plain.body.at("entries")) b.insert(e.at("course_id").get<std::string>());
      CHECK(a == b);
    }
  }

  TEST_CASE("seeded presentation order is reproducible") {
    const auto& f = testing::planted_fixture();
    testing::TempDir dir;
    Service svc(std::make_shared<FeedbackStore>(dir / "fb.jsonl"));
    svc.set_engine(f.engine);
    const auto a = svc.recommendations("S0003", {{"seed", "42"}});
    const auto b = svc.recommendations("S0003", {{"seed", "42"}});
    CHECK(a.body.dump() == b.body.dump());
    std::set<std::string> orders;
    for (int s = 0; s < 10; ++s) {
      std::string order;
      const auto r = svc.recommendations("S0003", {{"seed", std::to_string(s)}});
      for (const auto& e : r.body.at("entries")) order += e.at("course_id").get<std::string>() + ",";
      orders.insert(order);
    }
    CHECK(orders.size() > 1);
  }

  TEST_CASE("bad recommendation requests") {
    const auto& f = testing::planted_fixture();
    testing::TempDir dir;
    Service svc(std::make_shared<FeedbackStore>(dir / "fb.jsonl"));
    svc.set_engine(f.engine);
    CHECK(svc.recommendations("nobody", {}).status == 404);
    CHECK(svc.recommendations("S0001", {{"condition", "sometimes"}}).status == 400);
    CHECK(svc.recommendations("S0001", {{"seed", "-4"}}).status == 400);
    CHECK(svc.course("NOPE").status == 404);
    CHECK(svc.course(f.corpus.catalog[0].id).status == 200);
    CHECK(svc.courses().body.at("courses").size() == f.corpus.catalog.size());
    CHECK(svc.student("S0001").body.at("semesters").size() == 4);
    CHECK(svc.student("nobody").status == 404);
  }

  TEST_CASE("what-if requests") {
    const auto& f = testing::planted_fixture();
    testing::TempDir dir;
    Service svc(std::make_shared<FeedbackStore>(dir / "fb.jsonl"));
    svc.set_engine(f.engine);
    const auto base = svc.recommendations("S0002", {{"seed", "5"}});
    const auto same = svc.whatif(R"({"student_id":"S0002","added_courses":[],"seed":5})");
    REQUIRE(same.status == 200);
    CHECK(same.body == base.body);

    const std::string added = base.body.at("entries")[0].at("course_id");
    const auto moved = svc.whatif(json{{"student_id", "S0002"}, {"added_courses", {added}}}.dump());
    REQUIRE(moved.status == 200);
    for (const auto& e : moved.body.at("entries")) CHECK(e.at("course_id") != added);
    check_payload_contract(moved.body, true);

    CHECK(svc.whatif(R"({"student_id":"S0002","added_courses":["NOPE"]})").status == 400);
    CHECK(svc.whatif(R"({"student_id":"nobody"})").status == 404);
    CHECK(svc.whatif("{not json").status == 400);
    CHECK(svc.whatif(R"({"added_courses":[]})").status == 400);
  }

  TEST_CASE("adding planted antecedents raises the consequent") {
    const auto& f = testing::planted_fixture();
    const auto& e = *f.engine;
    for (const auto& rule : f.corpus.rules) {
      const EnrollmentHistory* pick = nullptr;
      for (const auto& h : f.corpus.histories) {
        if (!took_any(h, rule)) {
          pick = &h;
          break;
        }
      }
      REQUIRE(pick);
      EnrollmentHistory prefix = *pick;
      prefix.semesters.resize(2);
      const auto before = rank_of(score_candidates(*e.scorer, prefix, *e.catalog), rule.consequent);
      const auto augmented = with_added_semester(e, prefix, rule.antecedents);
      const auto after = rank_of(score_candidates(*e.scorer, augmented, *e.catalog), rule.consequent);
      INFO("rule ", rule.consequent, " before ", before, " after ", after);
      CHECK(after < before);
    }
  }

  TEST_CASE("feedback validation and upsert") {
    testing::TempDir dir;
    auto store = std::make_shared<FeedbackStore>(dir / "fb.jsonl");
    Service svc(store);
    const auto ok = svc.feedback(feedback_body("p1", "exp", {4, 2, 3, 5, 4}));
    CHECK(ok.status == 200);
    CHECK(ok.body.at("replaced") == false);
    const auto again = svc.feedback(feedback_body("p1", "exp", {5, 2, 3, 5, 4}));
    CHECK(again.body.at("replaced") == true);
    CHECK(store->size() == 1);
    CHECK(svc.feedback(feedback_body("p1", "no-exp", {4, 2, 3, 5, 4})).status == 409);
    CHECK(svc.feedback(feedback_body("p1", "exp", {4, 2, 3})).status == 409);
    CHECK(svc.feedback(feedback_body("p1", "exp", {9, 2, 3, 5, 4})).status == 422);
    CHECK(svc.feedback(R"({"participant_id":"p1"})").status == 422);
    CHECK(svc.feedback("{").status == 400);
    CHECK(svc.feedback(feedback_body("p1", "no-exp", {1, 1, 1})).status == 200);
    CHECK(store->size() == 2);
    CHECK(svc.health().body.at("feedback_records") == 2);
  }

  TEST_CASE("feedback survives restarts and compaction losslessly") {
    testing::TempDir dir;
    std::vector<SurveyResponse> written;
    {
      FeedbackStore store(dir / "fb.jsonl", 4);
      for (int i = 0; i < 10; ++i) {
        SurveyResponse r{"p" + std::to_string(i % 3), "C" + std::to_string(i), i % 2 ? Condition::kExp : Condition::kNoExp,
                         i % 2 == 0, {1 + i % 5, 2, 3, std::nullopt, std::nullopt}};
        if (r.condition == Condition::kExp) r.ratings[3] = r.ratings[4] = 4;
        store.upsert(r);
      }
      SurveyResponse updated = store.all().front();
      updated.ratings[0] = 5;
      CHECK(store.upsert(updated));
      written = store.all();
    }
    FeedbackStore reopened(dir / "fb.jsonl", 4);
    CHECK(reopened.all() == written);
    reopened.compact();
    CHECK(FeedbackStore(dir / "fb.jsonl").all() == written);
    // A torn trailing line from a crash is dropped on replay.
    std::ofstream(dir / "fb.jsonl", std::ios::app) << R"({"participant_id":"zz","cour)";
    CHECK(FeedbackStore(dir / "fb.jsonl").all() == written);
  }

  TEST_CASE("http routes end to end") {
    const auto& f = testing::planted_fixture();
    testing::TempDir dir;
    std::ofstream(dir / "index.html") << "<html></html>";
    Service svc(std::make_shared<FeedbackStore>(dir / "fb.jsonl"));
    svc.set_engine(f.engine);
    httplib::Server server;
    svc.mount(server, dir.path());
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client cli("127.0.0.1", port);

    auto health = cli.Get("/api/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(json::parse(health->body).at("status") == "ready");

    auto rec = cli.Get("/api/students/S0001/recommendations?condition=no-exp&seed=3");
    REQUIRE(rec);
    CHECK(rec->status == 200);
    check_payload_contract(json::parse(rec->body), false);
    CHECK(json::parse(rec->body) == svc.recommendations("S0001", {{"condition", "no-exp"}, {"seed", "3"}}).body);

    auto missing = cli.Get("/api/students/nobody/recommendations");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(json::parse(missing->body).at("error") == "not_found");

    auto wi = cli.Post("/api/whatif", R"({"student_id":"S0001","added_courses":[]})", "application/json");
    REQUIRE(wi);
    CHECK(wi->status == 200);

    auto fb = cli.Post("/api/feedback", feedback_body("p9", "exp", {3, 3, 3, 3, 3}), "application/json");
    REQUIRE(fb);
    CHECK(fb->status == 200);
    auto conflict = cli.Post("/api/feedback", feedback_body("p9", "no-exp", {3, 3, 3, 3, 3}), "application/json");
    REQUIRE(conflict);
    CHECK(conflict->status == 409);

    auto course = cli.Get("/api/courses/" + f.corpus.catalog[0].id);
    REQUIRE(course);
    CHECK(course->status == 200);
    auto page = cli.Get("/index.html");
    REQUIRE(page);
    CHECK(page->status == 200);

    server.stop();
    t.join();
  }
}
