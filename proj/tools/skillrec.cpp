#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "skillrec/catalog.hpp"
#include "skillrec/config.hpp"
#include "skillrec/engine.hpp"
#include "skillrec/error.hpp"
#include "skillrec/eval.hpp"
#include "skillrec/explainer.hpp"
#include "skillrec/model.hpp"
#include "skillrec/scoring.hpp"
#include "skillrec/service.hpp"
#include "skillrec/survey.hpp"
#include "skillrec/synth.hpp"
#include "skillrec/tagger.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace skillrec;

namespace {

struct Common {
  std::optional<fs::path> config_path;
  std::uint64_t seed = 0;
  std::string log_level = "info";
};

// Writes to `path`, or stdout when empty.
void emit(const fs::path& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("io", "failed writing " + path.string());
}

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "JSON config file (default: $SKILLREC_CONFIG)");
  cmd->add_option("--seed", common.seed, "Random seed");
  cmd->add_option("--log-level", common.log_level, "trace|debug|info|warn|error|off");
}

CasingMode parse_casing(const std::string& s) { return casing_mode_from_string(s); }

// Trained taggers from files, plus a lexicon tagger per requested casing when
// a gazetteer is given.
std::vector<SequenceTagger> build_taggers(const std::vector<fs::path>& tagger_paths, const fs::path& gazetteer,
                                          const std::vector<std::string>& lexicon_casings) {
  std::vector<SequenceTagger> taggers;
  for (const auto& p : tagger_paths) taggers.push_back(SequenceTagger::load(p));
  if (!gazetteer.empty()) {
    const auto phrases = load_phrase_list(gazetteer);
    for (const auto& c : lexicon_casings) {
      const CasingMode mode = parse_casing(c);
      taggers.emplace_back(std::make_unique<LexiconProvider>(phrases, mode), mode);
    }
  }
  if (taggers.empty()) throw ValidationError("no taggers: pass --tagger and/or --gazetteer");
  return taggers;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_st("skillrec"));

  CLI::App app{"skillrec: concept extraction, course recommendation and skill-based explanations"};
  app.require_subcommand(1);
  Common common;

  // extract
  auto* extract = app.add_subcommand("extract", "Tag every course description and print its skills");
  fs::path ex_catalog, ex_out, ex_catalog_out, ex_gazetteer;
  std::vector<fs::path> ex_taggers;
  std::vector<std::string> ex_lexicon_casings{"uncased"};
  extract->add_option("--catalog", ex_catalog, "Catalog (.jsonl or .csv)")->required();
  extract->add_option("--tagger", ex_taggers, "Trained tagger model (repeatable)");
  extract->add_option("--gazetteer", ex_gazetteer, "Phrase list for lexicon taggers");
  extract->add_option("--lexicon-casing", ex_lexicon_casings, "Casing modes for lexicon taggers");
  extract->add_option("--out", ex_out, "Output JSON-lines (default stdout)");
  extract->add_option("--catalog-out", ex_catalog_out, "Also write the catalog with skills attached");
  add_common(extract, common);

  // train-tagger
  auto* train_tagger = app.add_subcommand("train-tagger", "Train a feature CRF tagger on gold spans");
  fs::path tt_catalog, tt_gold, tt_out;
  std::string tt_casing = "cased";
  std::size_t tt_buckets = FeatureProvider::kDefaultHashBuckets;
  std::optional<int> tt_epochs;
  std::optional<double> tt_lr;
  train_tagger->add_option("--catalog", tt_catalog, "Catalog")->required();
  train_tagger->add_option("--gold", tt_gold, "Gold span annotations (JSON-lines)")->required();
  train_tagger->add_option("--out", tt_out, "Output model path")->required();
  train_tagger->add_option("--casing", tt_casing, "cased|uncased");
  train_tagger->add_option("--hash-buckets", tt_buckets, "Hashed feature space size");
  train_tagger->add_option("--epochs", tt_epochs, "Training epochs");
  train_tagger->add_option("--lr", tt_lr, "Learning rate");
  add_common(train_tagger, common);

  // train-model
  auto* train_model_cmd = app.add_subcommand("train-model", "Train the masked-sequence course model");
  fs::path tm_catalog, tm_enrollments, tm_out;
  std::optional<std::size_t> tm_d_model;
  std::optional<int> tm_pretrain, tm_finetune;
  std::optional<double> tm_lr, tm_mask_rate;
  train_model_cmd->add_option("--catalog", tm_catalog, "Catalog")->required();
  train_model_cmd->add_option("--enrollments", tm_enrollments, "Enrollment histories")->required();
  train_model_cmd->add_option("--out", tm_out, "Output model path")->required();
  train_model_cmd->add_option("--d-model", tm_d_model, "Hidden size");
  train_model_cmd->add_option("--pretrain-epochs", tm_pretrain, "Random-masking epochs");
  train_model_cmd->add_option("--finetune-epochs", tm_finetune, "Latest-semester epochs");
  train_model_cmd->add_option("--lr", tm_lr, "Adam learning rate");
  train_model_cmd->add_option("--mask-rate", tm_mask_rate, "Pretraining mask rate");
  add_common(train_model_cmd, common);

  // recommend
  auto* recommend_cmd = app.add_subcommand("recommend", "Recommend courses for one student");
  std::string rc_student;
  bool rc_explain = false;
  std::optional<fs::path> rc_data_dir;
  std::vector<std::string> rc_added;
  fs::path rc_out;
  recommend_cmd->add_option("--student", rc_student, "Student id")->required();
  recommend_cmd->add_flag("--explain", rc_explain, "Attach learned/new skill explanations");
  recommend_cmd->add_option("--data-dir", rc_data_dir, "Directory with catalog, enrollments and model");
  recommend_cmd->add_option("--add", rc_added, "Hypothetical next-semester courses");
  recommend_cmd->add_option("--out", rc_out, "Output file (default stdout)");
  add_common(recommend_cmd, common);

  // explain
  auto* explain_cmd = app.add_subcommand("explain", "Explain one course for one student");
  std::string xp_student, xp_course;
  std::optional<fs::path> xp_data_dir;
  explain_cmd->add_option("--student", xp_student, "Student id")->required();
  explain_cmd->add_option("--course", xp_course, "Course id")->required();
  explain_cmd->add_option("--data-dir", xp_data_dir, "Directory with catalog, enrollments and model");
  add_common(explain_cmd, common);

  // eval-extraction
  auto* eval_ex = app.add_subcommand("eval-extraction", "Span precision/recall/F1 against gold annotations");
  fs::path ee_catalog, ee_gold, ee_gazetteer;
  std::vector<fs::path> ee_taggers;
  std::vector<std::string> ee_lexicon_casings{"uncased"};
  std::string ee_averaging = "micro", ee_format = "text";
  eval_ex->add_option("--catalog", ee_catalog, "Catalog")->required();
  eval_ex->add_option("--gold", ee_gold, "Gold span annotations")->required();
  eval_ex->add_option("--tagger", ee_taggers, "Trained tagger model (repeatable)");
  eval_ex->add_option("--gazetteer", ee_gazetteer, "Phrase list for lexicon taggers");
  eval_ex->add_option("--lexicon-casing", ee_lexicon_casings, "Casing modes for lexicon taggers");
  eval_ex->add_option("--averaging", ee_averaging, "micro|macro")->check(CLI::IsMember({"micro", "macro"}));
  eval_ex->add_option("--format", ee_format, "text|json")->check(CLI::IsMember({"text", "json"}));
  add_common(eval_ex, common);

  // eval-recall
  auto* eval_rc = app.add_subcommand("eval-recall", "recall@k of the model, co-occurrence and random scorers");
  fs::path er_catalog, er_enrollments, er_train, er_model;
  std::size_t er_k = kDefaultRecommendations, er_trials = 1000;
  double er_coverage = 0.99;
  bool er_diversified = false;
  std::string er_format = "text";
  eval_rc->add_option("--catalog", er_catalog, "Catalog")->required();
  eval_rc->add_option("--enrollments", er_enrollments, "Evaluation histories (final semester is masked)")->required();
  eval_rc->add_option("--train-enrollments", er_train, "Histories for the co-occurrence baseline");
  eval_rc->add_option("--model", er_model, "Trained model")->required();
  eval_rc->add_option("--k", er_k, "List length");
  eval_rc->add_option("--trials", er_trials, "Monte Carlo trials for the random scorer");
  eval_rc->add_option("--coverage", er_coverage, "Random-scorer interval coverage");
  eval_rc->add_flag("--diversified", er_diversified, "Score the department-diversified list");
  eval_rc->add_option("--format", er_format, "text|json")->check(CLI::IsMember({"text", "json"}));
  add_common(eval_rc, common);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with planted rules");
  SyntheticSpec spec;
  fs::path sy_out = "data";
  synth->add_option("--out", sy_out, "Output directory");
  synth->add_option("--departments", spec.n_departments, "Department count");
  synth->add_option("--courses", spec.n_courses, "Course count");
  synth->add_option("--students", spec.n_students, "Student count");
  synth->add_option("--semesters", spec.n_semesters, "Semesters per student");
  synth->add_option("--rules", spec.n_rules, "Planted {A,B}->C rules");
  add_common(synth, common);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::optional<fs::path> sv_data_dir, sv_static;
  std::optional<int> sv_port;
  std::string sv_host = "0.0.0.0";
  serve->add_option("--data-dir", sv_data_dir, "Data directory");
  serve->add_option("--port", sv_port, "Port (default from config or SKILLREC_PORT)");
  serve->add_option("--host", sv_host, "Bind address");
  serve->add_option("--static", sv_static, "Directory of static UI assets");
  add_common(serve, common);

  // aggregate-survey
  auto* survey = app.add_subcommand("aggregate-survey", "Summarize Likert survey responses");
  fs::path as_responses;
  std::string as_format = "text";
  survey->add_option("--responses", as_responses, "Responses (JSON-lines, feedback log format)")->required();
  survey->add_option("--format", as_format, "text|json")->check(CLI::IsMember({"text", "json"}));
  add_common(survey, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(common.log_level));
    Config config = resolve_config(common.config_path);

    if (*extract) {
      Catalog catalog = load_catalog(ex_catalog);
      const auto taggers = build_taggers(ex_taggers, ex_gazetteer, ex_lexicon_casings);
      extract_catalog_skills(catalog, taggers, default_stoplist());
      std::string text;
      for (const auto& c : catalog.courses()) {
        json skills = json::array();
        for (const auto& s : c.skills) skills.push_back(skill_span_to_json(s));
        text += json{{"course_id", c.id}, {"skills", skills}}.dump() + "\n";
      }
      emit(ex_out, text);
      if (!ex_catalog_out.empty()) save_catalog(catalog, ex_catalog_out);
    } else if (*train_tagger) {
      const Catalog catalog = load_catalog(tt_catalog);
      const auto gold = load_gold_annotations(tt_gold);
      const CasingMode casing = parse_casing(tt_casing);
      const auto dataset = labeled_dataset(catalog, gold, casing);
      SequenceTagger tagger(std::make_unique<FeatureProvider>(tt_buckets), casing);
      CrfTrainOptions opts = config.tagger;
      opts.seed = common.seed;
      if (tt_epochs) opts.epochs = *tt_epochs;
      if (tt_lr) opts.learning_rate = *tt_lr;
      const auto report = crf_train(tagger, dataset, opts);
      tagger.save(tt_out);
      for (std::size_t e = 0; e < report.mean_nll.size(); ++e) {
        spdlog::info("epoch {} mean nll {}", e, format_double(report.mean_nll[e]));
      }
      std::cout << json{{"model", tt_out.string()}, {"sentences", dataset.size()}, {"mean_nll", report.mean_nll}}.dump()
                << '\n';
    } else if (*train_model_cmd) {
      const Catalog catalog = load_catalog(tm_catalog);
      const auto histories = load_enrollments(tm_enrollments, catalog);
      ModelConfig mc = config.model;
      mc.seed = common.seed;
      if (tm_d_model) mc.d_model = *tm_d_model;
      ModelTrainOptions opts = config.training;
      opts.seed = common.seed;
      if (tm_pretrain) opts.pretrain_epochs = *tm_pretrain;
      if (tm_finetune) opts.finetune_epochs = *tm_finetune;
      if (tm_lr) opts.learning_rate = *tm_lr;
      if (tm_mask_rate) opts.mask_rate = *tm_mask_rate;
      TrainedModel model{Vocabulary::from_corpus(catalog, histories), {}};
      model.params = ModelParams::init(mc, model.vocab);
      const auto report = train_model(model.params, model.vocab, histories, opts);
      model.save(tm_out);
      std::cout << json{{"model", tm_out.string()},
                        {"pretrain_loss", report.pretrain_loss},
                        {"finetune_loss", report.finetune_loss}}
                       .dump()
                << '\n';
    } else if (*recommend_cmd) {
      if (rc_data_dir) config.data_dir = *rc_data_dir;
      const auto engine = load_engine(config);
      const EnrollmentHistory* h = engine->find_student(rc_student);
      if (!h) throw NotFoundError("unknown student: " + rc_student);
      const auto history = with_added_semester(*engine, *h, rc_added);
      const auto payload = recommend(*engine, history, rc_explain ? Condition::kExp : Condition::kNoExp, common.seed);
      emit(rc_out, to_json(payload).dump(2) + "\n");
    } else if (*explain_cmd) {
      if (xp_data_dir) config.data_dir = *xp_data_dir;
      const auto engine = load_engine(config);
      const EnrollmentHistory* h = engine->find_student(xp_student);
      if (!h) throw NotFoundError("unknown student: " + xp_student);
      const auto ex = build_explanation(engine->catalog->at(xp_course), *h, *engine->catalog, *engine->store,
                                        config.explanation_size, config.threshold);
      std::cout << to_json(ex).dump(2) << '\n';
    } else if (*eval_ex) {
      Catalog catalog = load_catalog(ee_catalog);
      const auto gold = load_gold_annotations(ee_gold);
      const auto taggers = build_taggers(ee_taggers, ee_gazetteer, ee_lexicon_casings);
      SpanSets g, p;
      for (const auto& c : catalog.courses()) {
        auto it = gold.find(c.id);
        if (it == gold.end()) continue;
        g[c.id].insert(it->second.begin(), it->second.end());
        auto& pred = p[c.id];
        for (const auto& s : extract_skills(c, taggers, default_stoplist())) pred.emplace(s.token_start, s.token_end);
      }
      const auto report = span_prf(g, p, ee_averaging == "macro" ? Averaging::kMacro : Averaging::kMicro);
      std::cout << (ee_format == "json" ? to_json(report).dump(2) + "\n" : to_text(report));
    } else if (*eval_rc) {
      const Catalog catalog = load_catalog(er_catalog);
      const auto eval_set = load_enrollments(er_enrollments, catalog);
      const auto train_set = er_train.empty() ? eval_set : load_enrollments(er_train, catalog);
      const auto model = std::make_shared<const TrainedModel>(TrainedModel::load(er_model));
      const ModelScorer model_scorer(model, catalog);
      const auto baseline = cooccurrence_baseline(train_set, catalog);
      const double model_recall = recall_at_k(model_scorer, eval_set, catalog, er_k, er_diversified);
      const double base_recall = recall_at_k(baseline, eval_set, catalog, er_k, er_diversified);
      const auto ci = random_recall_interval(eval_set, catalog, er_k, er_trials, er_coverage, common.seed, er_diversified);
      if (er_format == "json") {
        std::cout << json{{"k", er_k},
                          {"model", model_recall},
                          {"cooccurrence", base_recall},
                          {"random", {{"mean", ci.mean}, {"lower", ci.lower}, {"upper", ci.upper}, {"trials", ci.trials}}}}
                         .dump(2)
                  << '\n';
      } else {
        std::printf("%-14s %10s\n", "scorer", "recall@k");
        std::printf("%-14s %10.4f\n", "model", model_recall);
        std::printf("%-14s %10.4f\n", "cooccurrence", base_recall);
        std::printf("%-14s %10.4f  [%.4f, %.4f]\n", "random", ci.mean, ci.lower, ci.upper);
      }
    } else if (*synth) {
      spec.seed = common.seed;
      const auto corpus = synth_generate(spec);
      write_synthetic_corpus(corpus, sy_out);
      spdlog::info("wrote {} courses, {} students, {} rules to {}", corpus.catalog.size(), corpus.histories.size(),
                   corpus.rules.size(), sy_out.string());
    } else if (*serve) {
      if (sv_data_dir) config.data_dir = *sv_data_dir;
      if (sv_port) config.port = *sv_port;
      if (sv_static) config.static_dir = *sv_static;
      auto feedback = std::make_shared<FeedbackStore>(config.data_dir / "feedback.jsonl", config.feedback_compact_every);
      Service service(feedback);
      service.set_engine(load_engine(config));
      run_server(service, sv_host, config.port, config.static_dir);
    } else if (*survey) {
      const auto responses = load_survey_responses(as_responses);
      for (const auto& r : responses) {
        if (const auto issue = validate(r); issue != SurveyIssue::kNone) {
          throw ValidationError("response " + r.participant_id + "/" + r.course_id + ": " + describe(issue));
        }
      }
      const auto summary = survey_aggregate(responses);
      std::cout << (as_format == "json" ? to_json(summary).dump(2) + "\n" : to_text(summary));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
