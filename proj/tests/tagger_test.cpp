#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "skillrec/emission.hpp"
#include "skillrec/error.hpp"
#include "skillrec/synth.hpp"
#include "skillrec/tagger.hpp"
#include "support.hpp"

using namespace skillrec;

namespace {

SequenceTagger lexicon_tagger(std::vector<std::string> phrases, CasingMode mode = CasingMode::kUncased) {
  return SequenceTagger(std::make_unique<LexiconProvider>(std::move(phrases), mode), mode);
}

std::set<std::string> texts(const std::vector<SkillSpan>& spans) {
  std::set<std::string> out;
  for (const auto& s : spans) out.insert(s.text);
  return out;
}

// Maximal runs of non-O labels, each split where a B starts a new span.
std::vector<std::pair<std::size_t, std::size_t>> oracle_runs(const LabelPath& p) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t i = 0;
  while (i < p.size()) {
    if (p[i] == Label::kO) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < p.size() && p[j] == Label::kInside) ++j;
    out.emplace_back(i, j);
    i = j;
  }
  return out;
}

const char* kAlgorithmsDescription =
    "This course emphasizes the study of the basic data structures of computer science (stacks, queues, trees, "
    "lists) and their implementations using the java language included in this study are programming techniques "
    "which use recursion, reference variables, and dynamic memory allocation. Students in this course are also "
    "introduced to various searching and sorting methods and also expected to develop an intuitive understanding "
    "of the complexity of these algorithms.";

}  // namespace

TEST_SUITE("tagger") {
  TEST_CASE("spans from BIO paths") {
    const auto text = tokenize("data structures and recursion");
    CHECK(spans_from_tags(LabelPath{Label::kO, Label::kO, Label::kO}, tokenize("a b c")).empty());
    const auto spans = spans_from_tags(LabelPath{Label::kBegin, Label::kInside, Label::kO, Label::kBegin}, text);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].text == "data structures");
    CHECK(spans[1].text == "recursion");
    CHECK(spans[1].token_start == 3);

    const auto repaired = spans_from_tags(LabelPath{Label::kInside, Label::kInside, Label::kO}, tokenize("a b c"));
    REQUIRE(repaired.size() == 1);
    CHECK(repaired[0].token_start == 0);
    CHECK(repaired[0].token_end == 2);
  }

  TEST_CASE("span reading agrees with the run oracle on all short paths") {
    const auto text = tokenize("t0 t1 t2 t3 t4");
    for (const auto& p : testing::all_paths(5)) {
      std::vector<std::pair<std::size_t, std::size_t>> got;
      for (const auto& s : spans_from_tags(p, text)) got.emplace_back(s.token_start, s.token_end);
      CHECK(got == oracle_runs(p));
    }
  }

  TEST_CASE("tags_from_spans inverts spans_from_tags") {
    const auto text = tokenize("a b c d e f");
    const std::vector<std::pair<std::size_t, std::size_t>> spans{{0, 2}, {3, 4}, {4, 6}};
    const auto path = tags_from_spans(6, spans);
    std::vector<std::pair<std::size_t, std::size_t>> back;
    for (const auto& s : spans_from_tags(path, text)) back.emplace_back(s.token_start, s.token_end);
    CHECK(back == spans);
    const std::vector<std::pair<std::size_t, std::size_t>> overlap{{0, 2}, {1, 3}};
    CHECK_THROWS_AS(tags_from_spans(6, overlap), ValidationError);
    const std::vector<std::pair<std::size_t, std::size_t>> outside{{5, 7}};
    CHECK_THROWS_AS(tags_from_spans(6, outside), ValidationError);
  }

  TEST_CASE("ensemble union with votes") {
    const SkillSpan a{"a b", 0, 2, 1}, b{"d", 3, 4, 1}, c{"a b c", 0, 3, 1};
    {
      const std::vector<std::vector<SkillSpan>> sets{{a}, {a}};
      const auto out = ensemble_combine(sets);
      REQUIRE(out.size() == 1);
      CHECK(out[0].votes == 2);
    }
    {
      const std::vector<std::vector<SkillSpan>> sets{{a}, {b}};
      const auto out = ensemble_combine(sets);
      REQUIRE(out.size() == 2);
      CHECK(out[0].votes == 1);
      CHECK(out[1].votes == 1);
    }
    {
      const std::vector<std::vector<SkillSpan>> sets{{a}, {a}, {c}};
      const auto out = ensemble_combine(sets);
      REQUIRE(out.size() == 2);
      CHECK(out[0].token_end == 2);
      CHECK(out[0].votes == 2);
      CHECK(out[1].token_end == 3);
      CHECK(out[1].votes == 1);
    }
    CHECK_THROWS_AS(ensemble_combine(std::span<const std::vector<SkillSpan>>{}), ValidationError);
  }

  TEST_CASE("ensemble agrees with a brute-force grouping") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::vector<SkillSpan>> sets(1 + rng() % 4);
      std::map<std::pair<std::size_t, std::size_t>, int> counts;
      for (auto& set : sets) {
        std::set<std::pair<std::size_t, std::size_t>> used;
        for (int k = 0; k < 3; ++k) {
          const std::size_t s = rng() % 6, len = 1 + rng() % 3;
          if (!used.insert({s, s + len}).second) continue;
          set.push_back({"x", s, s + len, 1});
          ++counts[{s, s + len}];
        }
      }
      const auto out = ensemble_combine(sets);
      REQUIRE(out.size() == counts.size());
      for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i].votes == counts.at({out[i].token_start, out[i].token_end}));
        if (i > 0) {
          const auto& p = out[i - 1];
          const auto& q = out[i];
          const bool ordered = p.votes > q.votes ||
                               (p.votes == q.votes && (p.token_end - p.token_start > q.token_end - q.token_start ||
                                                       (p.token_end - p.token_start == q.token_end - q.token_start &&
                                                        p.token_start <= q.token_start)));
          CHECK(ordered);
        }
      }
    }
  }

  TEST_CASE("postprocessing filters and merges") {
    const auto& stop = default_stoplist();
    CHECK(postprocess_skills({{"homework", 0, 1, 3}}, stop).empty());
    CHECK(postprocess_skills({{"introduction to the theory of computation and logic", 0, 8, 1}}, stop).empty());
    CHECK(postprocess_skills({{"one two three four five", 0, 5, 1}}, stop).size() == 1);
    const auto merged = postprocess_skills({{"stacks", 0, 1, 1}, {"stack", 5, 6, 2}}, stop);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].text == "stack");
    CHECK(merged[0].votes == 2);
    const auto merged2 = postprocess_skills({{"hash tables", 0, 2, 3}, {"hash table", 5, 7, 1}}, stop);
    REQUIRE(merged2.size() == 1);
    CHECK(merged2[0].text == "hash table");
    CHECK(merged2[0].votes == 3);
    CHECK(postprocess_skills({{"stacks", 0, 1, 1}}, stop)[0].text == "stacks");
  }

  TEST_CASE("singular forms") {
    CHECK(strip_plural("stacks") == "stack");
    CHECK(strip_plural("theories") == "theory");
    CHECK(strip_plural("classes") == "class");
    CHECK(strip_plural("class") == "class");
    CHECK(strip_plural("analysis") == "analysis");
    CHECK(strip_plural("hash tables") == "hash table");
    CHECK(strip_plural("gas") == "gas");
  }

  TEST_CASE("lexicon extraction on the algorithms description") {
    const std::vector<std::string> phrases{"data structures", "computer science", "stacks", "queues", "trees",
                                           "lists", "java language", "programming techniques", "recursion",
                                           "reference variables", "dynamic memory allocation", "searching",
                                           "sorting methods", "complexity", "algorithms"};
    const std::vector<SequenceTagger> taggers{lexicon_tagger(phrases)};
    const auto skills = texts(extract_skills(testing::make_course("CS", "CS", kAlgorithmsDescription), taggers,
                                             default_stoplist()));
    for (const char* want : {"data structures", "stacks", "queues", "recursion", "dynamic memory allocation"}) {
      CHECK_MESSAGE(skills.count(want), want);
    }
    CHECK(extract_skills(testing::make_course("X", "D", "the and of a in"), taggers, default_stoplist()).empty());
  }

  TEST_CASE("lexicon casing modes") {
    const auto text = "Intro to Data Structures";
    CHECK(lexicon_tagger({"data structures"}, CasingMode::kUncased).extract(tokenize(text, CasingMode::kUncased)).size() == 1);
    CHECK(lexicon_tagger({"data structures"}, CasingMode::kCased).extract(tokenize(text)).empty());
    // Longest match wins.
    const auto spans = lexicon_tagger({"data", "data structures"}).extract(tokenize("data structures", CasingMode::kUncased));
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].token_end == 2);
  }

  TEST_CASE("synthetic descriptions are recoverable with the vocabulary lexicon") {
    SyntheticSpec spec;
    spec.n_students = 5;
    const auto corpus = synth_generate(spec);
    const std::vector<SequenceTagger> taggers{lexicon_tagger(corpus.gazetteer)};
    std::size_t checked = 0;
    for (const auto& c : corpus.catalog.courses()) {
      const auto& gold = corpus.gold.at(c.id);
      if (gold.size() != 6) continue;
      const auto text = tokenize(c.description);
      std::set<std::string> want;
      for (const auto& [b, e] : gold) want.insert(text.detokenize(b, e));
      std::size_t found = 0;
      for (const auto& s : extract_skills(c, taggers, default_stoplist())) found += want.count(s.text);
      CHECK(found >= 5);
      ++checked;
    }
    CHECK(checked > 100);
  }

  TEST_CASE("training lowers the mean nll and lr=0 is a no-op") {
    std::vector<LabeledText> data;
    const std::vector<std::string> sentences{
        "we study data structures and recursion", "graphs and trees appear often",
        "recursion is covered early",           "the lab uses data structures daily",
        "trees and graphs in practice",         "homework on recursion and trees",
        "advanced data structures topics",      "graphs appear with recursion",
        "students implement trees",             "a survey of data structures"};
    const std::vector<std::string> phrases{"data structures", "recursion", "graphs", "trees"};
    const auto lex = lexicon_tagger(phrases, CasingMode::kCased);
    for (const auto& s : sentences) {
      LabeledText lt{tokenize(s), {}};
      lt.gold = lex.tag(lt.text);
      data.push_back(std::move(lt));
    }
    // A weakened lexicon so there is something left to learn.
    SequenceTagger student(std::make_unique<LexiconProvider>(std::vector<std::string>{"data", "recursion"},
                                                             CasingMode::kCased),
                           CasingMode::kCased);
    CrfTrainOptions opts;
    opts.epochs = 20;
    opts.seed = 4;
    const auto report = crf_train(student, data, opts);
    REQUIRE(report.mean_nll.size() == 21);
    CHECK(report.mean_nll.back() < report.mean_nll.front());
    CHECK(student.transitions()(Label::kO, Label::kInside) == kForbiddenScore);

    SequenceTagger frozen(std::make_unique<FeatureProvider>(64), CasingMode::kCased);
    const auto before_t = frozen.transitions();
    const auto before_p = frozen.provider().params();
    opts.learning_rate = 0.0;
    crf_train(frozen, data, opts);
    CHECK(frozen.transitions() == before_t);
    CHECK(frozen.provider().params() == before_p);

    CHECK_THROWS_AS(crf_train(frozen, std::span<const LabeledText>{}, opts), ValidationError);
  }

  TEST_CASE("feature tagger learns gold spans") {
    std::vector<LabeledText> data;
    const auto lex = lexicon_tagger({"data structures", "recursion", "graphs", "trees"}, CasingMode::kCased);
    const char* templates[] = {"we study {} and {} today", "topics include {} then {}", "{} with {} in practice"};
    const char* words[] = {"data structures", "recursion", "graphs", "trees"};
    for (int i = 0; i < 24; ++i) {
      std::string s = templates[i % 3];
      s.replace(s.find("{}"), 2, words[i % 4]);
      s.replace(s.find("{}"), 2, words[(i + 1 + i / 4) % 4]);
      LabeledText lt{tokenize(s), {}};
      lt.gold = lex.tag(lt.text);
      data.push_back(std::move(lt));
    }
    SequenceTagger tagger(std::make_unique<FeatureProvider>(512), CasingMode::kCased);
    CrfTrainOptions opts;
    opts.epochs = 30;
    opts.seed = 2;
    const auto report = crf_train(tagger, data, opts);
    CHECK(report.mean_nll.back() < 0.5 * report.mean_nll.front());
    std::size_t correct = 0;
    for (const auto& d : data) correct += tagger.tag(d.text) == d.gold;
    CHECK(correct >= 20);
  }

  TEST_CASE("tagger models round-trip") {
    testing::TempDir dir;
    SequenceTagger t(std::make_unique<FeatureProvider>(32), CasingMode::kUncased);
    std::vector<double> p(t.provider().num_params());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = (i % 7 == 0) ? 0.25 * static_cast<double>(i % 5) : 0.0;
    t.provider().set_params(p);
    t.transitions()(Label::kBegin, Label::kInside) = 1.5;
    t.save(dir / "t.json");
    const auto back = SequenceTagger::load(dir / "t.json");
    CHECK(back.casing() == CasingMode::kUncased);
    CHECK(back.transitions() == t.transitions());
    CHECK(back.provider().params() == t.provider().params());
    CHECK(back.to_json() == t.to_json());

    const auto lex = lexicon_tagger({"a b"});
    CHECK(SequenceTagger::from_json(lex.to_json()).to_json() == lex.to_json());
    CHECK_THROWS_AS(SequenceTagger::from_json(nlohmann::json{{"format", "other"}}), ValidationError);
  }

  TEST_CASE("gold annotations round-trip and build labeled data") {
    testing::TempDir dir;
    const GoldAnnotations gold{{"A", {{0, 2}, {3, 4}}}, {"B", {}}};
    save_gold_annotations(gold, dir / "g.jsonl");
    CHECK(load_gold_annotations(dir / "g.jsonl") == gold);
    const Catalog cat({testing::make_course("A", "D", "data structures and recursion"),
                       testing::make_course("B", "D", "nothing here")});
    const auto data = labeled_dataset(cat, gold, CasingMode::kCased);
    REQUIRE(data.size() == 2);
    CHECK(data[0].gold == LabelPath{Label::kBegin, Label::kInside, Label::kO, Label::kBegin});
    CHECK(data[1].gold == LabelPath{Label::kO, Label::kO});
  }
}
