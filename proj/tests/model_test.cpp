#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "skillrec/error.hpp"
#include "skillrec/model.hpp"
#include "skillrec/synth.hpp"
#include "support.hpp"

using namespace skillrec;

namespace {

Vocabulary small_vocab(std::size_t n) {
  std::vector<std::string> courses;
  for (std::size_t i = 0; i < n; ++i) courses.push_back("C" + std::to_string(i));
  return Vocabulary(courses, {"math", "art"});
}

EnrollmentHistory history(std::vector<Semester> semesters, std::vector<std::string> major = {}) {
  return EnrollmentHistory{"S", std::move(semesters), std::move(major)};
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("vocabulary reserves mask and unknown ids") {
    const auto v = small_vocab(3);
    CHECK(Vocabulary::kMaskToken == 0);
    CHECK(Vocabulary::kUnknownToken == 1);
    CHECK(v.input_token("C0") == 2);
    CHECK(v.input_token("C2") == 4);
    CHECK(v.input_token("nope") == Vocabulary::kUnknownToken);
    CHECK(v.output_index("C1") == 1u);
    CHECK_FALSE(v.output_index("nope").has_value());
    CHECK(v.major_token("physics") == Vocabulary::kUnknownMajor);
    CHECK(v.major_token("math") == 2);
  }

  TEST_CASE("examples share a position within a semester") {
    const auto v = small_vocab(5);
    const auto ex = make_example(history({{"C0", "C1"}, {"C2"}, {"C3", "C4"}}, {"art"}), v);
    CHECK(ex.tokens == std::vector<std::size_t>{2, 3, 4, 5, 6});
    CHECK(ex.positions == std::vector<std::size_t>{0, 0, 1, 2, 2});
    CHECK(ex.majors == std::vector<std::size_t>{3});
    CHECK(make_example(history({{"C0"}}), v).majors == std::vector<std::size_t>{Vocabulary::kUndeclaredMajor});
  }

  TEST_CASE("tiny mask rate still masks exactly one course") {
    const auto v = small_vocab(6);
    const auto ex = make_example(history({{"C0", "C1"}, {"C2", "C3"}, {"C4", "C5"}}), v);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto b = mask_sampling(ex, 1e-12, seed);
      REQUIRE(b.masked.size() == 1);
      CHECK(b.input.tokens[b.masked[0]] == Vocabulary::kMaskToken);
      CHECK(b.targets[0] + 2 == ex.tokens[b.masked[0]]);
    }
    const auto all = mask_sampling(ex, 1.0, 3);
    CHECK(all.masked.size() == ex.size());
    CHECK_THROWS_AS(mask_sampling(ex, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(mask_sampling(ex, 1.5, 1), ValidationError);
  }

  TEST_CASE("mask rate is honoured on average") {
    const auto v = small_vocab(40);
    std::vector<Semester> sems(4);
    for (std::size_t i = 0; i < 40; ++i) sems[i % 4].push_back("C" + std::to_string(i));
    const auto ex = make_example(history(sems), v);
    std::mt19937_64 rng(9);
    std::size_t masked = 0;
    const int trials = 2000;
    for (int t = 0; t < trials; ++t) masked += mask_sampling(ex, 0.3, rng).masked.size();
    CHECK(static_cast<double>(masked) / (trials * 40.0) == doctest::Approx(0.3).epsilon(0.02 / 0.3));
  }

  TEST_CASE("unknown courses are never masked") {
    const auto v = small_vocab(2);
    const auto ex = make_example(history({{"C0", "X"}, {"Y", "C1"}}), v);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      for (std::size_t m : mask_sampling(ex, 1.0, seed).masked) CHECK(ex.tokens[m] != Vocabulary::kUnknownToken);
    }
    CHECK_THROWS_AS(mask_sampling(make_example(history({{"X"}}), v), 0.5, 1), ValidationError);
  }

  TEST_CASE("latest-semester masking") {
    const auto v = small_vocab(5);
    const auto ex = make_example(history({{"C0"}, {"C1", "C2"}, {"C3", "C4"}}), v);
    const auto b = mask_latest_semester(ex);
    CHECK(b.masked == std::vector<std::size_t>{3, 4});
    CHECK(b.targets == std::vector<std::size_t>{3, 4});
    CHECK(b.input.tokens[0] == 2);
    CHECK(b.input.tokens[3] == Vocabulary::kMaskToken);
    CHECK_THROWS_AS(mask_latest_semester(make_example(history({{"C0", "C1"}}), v)), ValidationError);
  }

  TEST_CASE("attention rows are distributions") {
    const auto v = small_vocab(8);
    const auto p = ModelParams::init(ModelConfig{8, 12, 4, 0.5, 2}, v);
    const auto b = mask_latest_semester(make_example(history({{"C0", "C1"}, {"C2"}, {"C3"}}, {"math"}), v));
    const auto f = model_forward(p, b);
    CHECK(f.attention.rows() == 4);
    for (Eigen::Index r = 0; r < f.attention.rows(); ++r) {
      CHECK(f.attention.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(f.attention.row(r).minCoeff() >= 0.0);
    }
    CHECK(f.logits.rows() == 1);
    CHECK(f.logits.cols() == 8);
  }

  TEST_CASE("order within a semester does not matter") {
    const auto v = small_vocab(10);
    TrainedModel m{v, ModelParams::init(ModelConfig{8, 12, 4, 0.5, 4}, v)};
    const auto a = m.next_semester_distribution({{"C0", "C1", "C2"}, {"C3", "C4"}}, {"math"});
    const auto b = m.next_semester_distribution({{"C2", "C0", "C1"}, {"C4", "C3"}}, {"math"});
    REQUIRE(a.size() == b.size());
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
      total += a[i];
    }
    CHECK(total == doctest::Approx(1.0));
    const auto c = m.next_semester_distribution({{"C3", "C4"}, {"C0", "C1", "C2"}}, {"math"});
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs |= std::abs(a[i] - c[i]) > 1e-9;
    CHECK(differs);
  }

  TEST_CASE("analytic gradients match central differences for every group") {
    const auto v = small_vocab(12);
    ModelConfig config{8, 6, 4, 0.5, 7};
    double smoothing = 0.0;
    SUBCASE("tied output") {}
    SUBCASE("untied output with label smoothing") {
      config.tie_output = false;
      smoothing = 0.3;
    }
    SUBCASE("two heads with label smoothing") {
      config.heads = 2;
      smoothing = 0.1;
    }
    const auto params = ModelParams::init(config, v);
    std::vector<MaskedBatch> batches;
    batches.push_back(mask_sampling(
        make_example(history({{"C0", "C1"}, {"C2", "C3"}, {"C4"}, {"C5"}, {"C6"}}, {"math"}), v), 0.5, 1));
    batches.push_back(mask_latest_semester(make_example(history({{"C7", "C8"}, {"C9", "C10", "C11"}}, {"art", "math"}), v)));
    batches.push_back(mask_latest_semester(make_example(history({{"C1", "X"}, {"C11"}}), v)));

    auto grad = ModelParams::zeros_like(params);
    masked_loss(params, batches, &grad, smoothing);
    std::vector<const Matrix*> grads;
    grad.for_each([&](std::string_view, const Matrix& g) { grads.push_back(&g); });

    constexpr double h = 1e-5;
    std::size_t group = 0, checked = 0;
    auto probe = params;
    probe.for_each([&](std::string_view name, Matrix& w) {
      const Matrix& g = *grads[group++];
      INFO("group ", name);
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double orig = w.data()[i];
        w.data()[i] = orig + h;
        const double up = masked_loss(probe, batches, nullptr, smoothing);
        w.data()[i] = orig - h;
        const double down = masked_loss(probe, batches, nullptr, smoothing);
        w.data()[i] = orig;
        CHECK(testing::close_rel(g.data()[i], (up - down) / (2 * h), 1e-4, 1e-8));
        ++checked;
      }
    });
    CHECK(group == 13);
    CHECK(checked > 500);
  }

  TEST_CASE("zero learning rate leaves parameters untouched") {
    const auto corpus = synth_generate({4, 30, 20, 3, 2, 5});
    const auto v = Vocabulary::from_corpus(corpus.catalog, corpus.histories);
    auto p = ModelParams::init(ModelConfig{}, v);
    const auto before = p;
    ModelTrainOptions o;
    o.pretrain_epochs = 2;
    o.finetune_epochs = 2;
    o.learning_rate = 0.0;
    train_model(p, v, corpus.histories, o);
    CHECK(p == before);
  }

  TEST_CASE("training is deterministic per seed and lowers held-out loss") {
    SyntheticSpec spec;
    spec.n_students = 200;
    const auto corpus = synth_generate(spec);
    const std::vector<EnrollmentHistory> train(corpus.histories.begin(), corpus.histories.begin() + 160);
    const std::vector<EnrollmentHistory> test(corpus.histories.begin() + 160, corpus.histories.end());
    const auto v = Vocabulary::from_corpus(corpus.catalog, train);
    ModelTrainOptions o;
    o.seed = 3;
    auto a = ModelParams::init(ModelConfig{}, v);
    auto b = a;
    const double initial = heldout_loss(a, v, test);
    const auto report = train_model(a, v, train, o);
    train_model(b, v, train, o);
    CHECK(a == b);
    CHECK(report.pretrain_loss.size() == static_cast<std::size_t>(o.pretrain_epochs));
    CHECK(report.finetune_loss.size() == static_cast<std::size_t>(o.finetune_epochs));
    CHECK(a.all_finite());
    const double trained = heldout_loss(a, v, test);
    INFO("initial ", initial, " trained ", trained);
    CHECK(trained <= 0.7 * initial);

    auto c = ModelParams::init(ModelConfig{}, v);
    o.seed = 4;
    train_model(c, v, train, o);
    CHECK_FALSE(a == c);
  }

  TEST_CASE("checkpoint round-trip") {
    testing::TempDir dir;
    const auto v = small_vocab(6);
    const TrainedModel m{v, ModelParams::init(ModelConfig{8, 12, 4, 0.3, 1}, v)};
    m.save(dir / "model.json");
    const auto back = TrainedModel::load(dir / "model.json");
    CHECK(back.params == m.params);
    CHECK(back.vocab.courses() == v.courses());
    CHECK(back.vocab.majors() == v.majors());
    CHECK(back.next_semester_distribution({{"C0"}}, {}) == m.next_semester_distribution({{"C0"}}, {}));
    CHECK_THROWS_AS(TrainedModel::load(dir / "missing.json"), NotFoundError);
    auto j = m.to_json();
    j["format"] = "other";
    CHECK_THROWS_AS(TrainedModel::from_json(j), ValidationError);
  }

  TEST_CASE("planted consequent ranks in the upper half after its antecedents") {
    const auto corpus = synth_generate({8, 80, 240, 4, 4, 6});
    const auto v = Vocabulary::from_corpus(corpus.catalog, corpus.histories);
    auto p = ModelParams::init(ModelConfig{}, v);
    train_model(p, v, corpus.histories, ModelTrainOptions{});
    const TrainedModel m{v, p};
    for (const auto& rule : corpus.rules) {
      INFO("consequent ", rule.consequent);
      const auto dist = m.next_semester_distribution({{rule.antecedents[0], rule.antecedents[1]}}, {});
      const double target = dist[*v.output_index(rule.consequent)];
      const auto above = std::count_if(dist.begin(), dist.end(), [&](double x) { return x > target; });
      CHECK(static_cast<std::size_t>(above) < dist.size() / 2);
    }
  }
}
