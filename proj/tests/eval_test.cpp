#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "skillrec/error.hpp"
#include "skillrec/eval.hpp"
#include "support.hpp"

using namespace skillrec;
using testing::make_course;

namespace {

const std::string kLong = "A full description with enough words to be recommendable by the catalog rules here.";

// Knows each student's final semester and scores it highest.
class PeekingScorer final : public CourseScorer {
 public:
  PeekingScorer(const Catalog& cat, std::map<std::string, std::string> next) : cat_(cat), next_(std::move(next)) {}
  std::vector<double> scores(const std::vector<Semester>& semesters, const std::vector<std::string>&) const override {
    std::vector<double> s(cat_.size(), 0.0);
    s[*cat_.index_of(next_.at(semesters.front().front()))] = 1.0;
    return s;
  }
  std::string name() const override { return "peek"; }

 private:
  const Catalog& cat_;
  std::map<std::string, std::string> next_;
};

Catalog numbered_catalog(int n) {
  std::vector<Course> cs;
  for (int i = 0; i < n; ++i) cs.push_back(make_course("C" + std::to_string(i), "D" + std::to_string(i % 7), kLong));
  return Catalog(cs);
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("single-course span fixtures") {
    const SpanSets gold{{"c", {{0, 1}, {2, 3}}}};
    const SpanSets pred{{"c", {{2, 3}, {4, 6}}}};
    for (auto mode : {Averaging::kMicro, Averaging::kMacro}) {
      const auto r = span_prf(gold, pred, mode);
      CHECK(r.precision == 0.5);
      CHECK(r.recall == 0.5);
      CHECK(r.f1 == 0.5);
      const auto same = span_prf(gold, gold, mode);
      CHECK(same.precision == 1.0);
      CHECK(same.recall == 1.0);
      CHECK(same.f1 == 1.0);
    }
  }

  TEST_CASE("three-course fixture, micro and macro by hand") {
    // c1: gold 3, pred 2, tp 2.  c2: gold 1, pred 3, tp 1.  c3: gold 2, pred 0.
    const SpanSets gold{{"c1", {{0, 1}, {1, 2}, {3, 5}}}, {"c2", {{0, 2}}}, {"c3", {{1, 2}, {4, 5}}}};
    const SpanSets pred{{"c1", {{0, 1}, {3, 5}}}, {"c2", {{0, 2}, {2, 3}, {5, 6}}}, {"c3", {}}};
    const auto micro = span_prf(gold, pred, Averaging::kMicro);
    CHECK(micro.true_positives == 3);
    CHECK(micro.false_positives == 2);
    CHECK(micro.false_negatives == 3);
    CHECK(micro.precision == doctest::Approx(3.0 / 5.0));
    CHECK(micro.recall == doctest::Approx(3.0 / 6.0));
    CHECK(micro.f1 == doctest::Approx(2 * 0.6 * 0.5 / 1.1));

    const auto macro = span_prf(gold, pred, Averaging::kMacro);
    CHECK(macro.precision == doctest::Approx((1.0 + 1.0 / 3.0 + 0.0) / 3.0));
    CHECK(macro.recall == doctest::Approx((2.0 / 3.0 + 1.0 + 0.0) / 3.0));
    CHECK(macro.f1 == doctest::Approx((0.8 + 0.5 + 0.0) / 3.0));
  }

  TEST_CASE("micro equals macro for identical per-course profiles") {
    const SpanSets gold{{"a", {{0, 1}, {2, 3}}}, {"b", {{5, 6}, {7, 9}}}};
    const SpanSets pred{{"a", {{0, 1}, {3, 4}}}, {"b", {{7, 9}, {1, 2}}}};
    const auto mi = span_prf(gold, pred, Averaging::kMicro);
    const auto ma = span_prf(gold, pred, Averaging::kMacro);
    CHECK(mi.precision == doctest::Approx(ma.precision));
    CHECK(mi.recall == doctest::Approx(ma.recall));
    CHECK(mi.f1 == doctest::Approx(ma.f1));
  }

  TEST_CASE("empty courses and key mismatches") {
    const SpanSets empty{{"a", {}}};
    CHECK(span_prf(empty, empty, Averaging::kMacro).f1 == 1.0);
    CHECK(span_prf(empty, SpanSets{{"a", {{0, 1}}}}, Averaging::kMicro).precision == 0.0);
    CHECK_THROWS_AS(span_prf(empty, SpanSets{{"b", {}}}, Averaging::kMicro), ValidationError);
    CHECK_THROWS_AS(span_prf(empty, SpanSets{}, Averaging::kMicro), ValidationError);
    CHECK(f1_score(0.0, 0.0) == 0.0);
  }

  TEST_CASE("kappa and proportional agreement") {
    const std::vector<int> a{1, 1, 0, 0}, b{1, 0, 1, 0};
    CHECK(cohen_kappa(a, b) == doctest::Approx(0.0));
    CHECK(cohen_kappa(a, a) == 1.0);
    CHECK(proportional_agreement(a, a) == 1.0);
    const std::vector<int> x{1, 0, 1, 0}, y{0, 1, 0, 1};
    CHECK(proportional_agreement(x, y) == 0.0);
    const std::vector<int> p{1, 1, 1, 0, 0, 1, 0, 1}, q{1, 1, 0, 0, 0, 1, 1, 1};
    CHECK(proportional_agreement(p, q) == 0.75);
    // p_o = 0.75, p_e = (5/8)^2 + (3/8)^2 = 34/64.
    CHECK(cohen_kappa(p, q) == doctest::Approx((0.75 - 34.0 / 64.0) / (1.0 - 34.0 / 64.0)).epsilon(1e-12));
    const std::vector<int> ones{1, 1, 1};
    CHECK(cohen_kappa(ones, ones) == 1.0);
    CHECK_THROWS_AS(proportional_agreement(std::vector<int>{}, std::vector<int>{}), ValidationError);
    CHECK_THROWS_AS(proportional_agreement(a, ones), ValidationError);
  }

  TEST_CASE("kappa is one exactly when agreement is perfect") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<int> a(6), b(6);
      for (auto& v : a) v = static_cast<int>(rng() % 2);
      for (auto& v : b) v = static_cast<int>(rng() % 2);
      const double po = proportional_agreement(a, b);
      try {
        const double k = cohen_kappa(a, b);
        CHECK((k == doctest::Approx(1.0)) == (po == 1.0));
      } catch (const ValidationError&) {
        CHECK(po < 1.0);  // both raters constant and different
      }
    }
  }

  TEST_CASE("a peeking scorer recovers single-course final semesters") {
    const auto cat = numbered_catalog(12);
    std::vector<EnrollmentHistory> hs;
    std::map<std::string, std::string> next;
    for (int i = 0; i < 6; ++i) {
      const std::string first = "C" + std::to_string(i), last = "C" + std::to_string(11 - i);
      hs.push_back({"S" + std::to_string(i), {{first}, {last}}, {}});
      next[first] = last;
    }
    hs.push_back({"lonely", {{"C1"}}, {}});
    const PeekingScorer scorer(cat, next);
    CHECK(recall_at_k(scorer, hs, cat, 5) == 1.0);
    CHECK(recall_at_k(scorer, hs, cat, 1) == 1.0);
    CHECK(recall_at_k(scorer, hs, cat, 5, true) == 1.0);
    CHECK_THROWS_AS(recall_at_k(scorer, hs, cat, 0), ValidationError);
  }

  TEST_CASE("random scorer recall matches the hypergeometric expectation") {
    const auto cat = numbered_catalog(20);
    std::mt19937_64 rng(6);
    std::vector<EnrollmentHistory> hs;
    for (int s = 0; s < 1000; ++s) {
      std::vector<std::string> ids;
      for (int i = 0; i < 20; ++i) ids.push_back("C" + std::to_string(i));
      std::shuffle(ids.begin(), ids.end(), rng);
      // The first semester is outside the catalog so all 20 stay candidates.
      hs.push_back({"S" + std::to_string(s), {{"OUTSIDE"}, {ids.begin(), ids.begin() + 5}}, {}});
    }
    const RandomScorer scorer(cat.size(), 17);
    const double r = recall_at_k(scorer, hs, cat, 5);
    const double se = std::sqrt(5 * 0.25 * 0.75 * 15.0 / 19.0) / 5.0 / std::sqrt(1000.0);
    CHECK(std::abs(r - 0.25) < 3.29 * se);
  }

  TEST_CASE("recall is bounded and monotone in k") {
    const auto cat = numbered_catalog(30);
    std::mt19937_64 rng(2);
    std::vector<EnrollmentHistory> hs;
    for (int s = 0; s < 50; ++s) {
      EnrollmentHistory h{"S" + std::to_string(s), {{}, {}, {}}, {}};
      for (int i = 0; i < 29; ++i) {
        const auto sem = rng() % 6;
        if (sem < 2) h.semesters[sem].push_back("C" + std::to_string(i));
      }
      h.semesters.back().push_back("C" + std::to_string(rng() % 30));
      hs.push_back(h);
    }
    std::vector<double> s(30);
    for (auto& x : s) x = static_cast<double>(rng() % 1000);
    class Fixed final : public CourseScorer {
     public:
      explicit Fixed(std::vector<double> v) : v_(std::move(v)) {}
      std::vector<double> scores(const std::vector<Semester>&, const std::vector<std::string>&) const override { return v_; }
      std::string name() const override { return "fixed"; }
      std::vector<double> v_;
    } scorer(s);
    // Single-course final semesters keep the denominator fixed at 1.
    double prev = 0.0;
    for (std::size_t k = 1; k <= 30; ++k) {
      const double r = recall_at_k(scorer, hs, cat, k);
      CHECK(r >= 0.0);
      CHECK(r <= 1.0);
      if (k > 1) CHECK(r >= prev - 1e-12);
      prev = r;
    }
  }

  TEST_CASE("monte carlo interval brackets its mean") {
    const auto cat = numbered_catalog(20);
    std::vector<EnrollmentHistory> hs;
    for (int s = 0; s < 40; ++s) hs.push_back({"S" + std::to_string(s), {{"OUTSIDE"}, {"C1", "C2", "C3"}}, {}});
    const auto ci = random_recall_interval(hs, cat, 5, 300, 0.99, 4);
    CHECK(ci.trials == 300);
    CHECK(ci.lower <= ci.mean);
    CHECK(ci.mean <= ci.upper);
    CHECK(ci.mean == doctest::Approx(0.25).epsilon(0.1));
    const auto again = random_recall_interval(hs, cat, 5, 300, 0.99, 4);
    CHECK(again.upper == ci.upper);
  }

  TEST_CASE("history split is a seeded partition") {
    std::vector<EnrollmentHistory> hs;
    for (int s = 0; s < 50; ++s) hs.push_back({"S" + std::to_string(s), {{"C1"}}, {}});
    const auto a = split_histories(hs, 0.2, 7);
    const auto b = split_histories(hs, 0.2, 7);
    CHECK(a.test.size() == 10);
    CHECK(a.train.size() == 40);
    CHECK(a.test == b.test);
    std::set<std::string> ids;
    for (const auto& h : a.train) ids.insert(h.student_id);
    for (const auto& h : a.test) ids.insert(h.student_id);
    CHECK(ids.size() == 50);
    CHECK_THROWS_AS(split_histories(hs, 1.5, 1), ValidationError);
  }

  TEST_CASE("report serialization") {
    MetricsReport m;
    m.precision = 0.5;
    m.recall = 0.25;
    m.f1 = f1_score(0.5, 0.25);
    const auto j = to_json(m);
    CHECK(j.at("f1").get<double>() == doctest::Approx(1.0 / 3.0));
    CHECK(to_text(m).find("precision") != std::string::npos);
  }
}
