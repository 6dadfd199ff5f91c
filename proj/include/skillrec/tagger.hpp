#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "skillrec/catalog.hpp"
#include "skillrec/crf.hpp"
#include "skillrec/emission.hpp"
#include "skillrec/text.hpp"

namespace skillrec {

// Post-processing limits for extracted skills.
inline constexpr std::size_t kMaxSkillWords = 5;

/// One BIO tagger: an emission provider plus a CRF transition layer, applied
/// to text tokenized in a fixed casing mode.
class SequenceTagger {
 public:
  SequenceTagger(std::unique_ptr<EmissionProvider> provider, CasingMode casing,
                 TransitionMatrix transitions = {});
  SequenceTagger(const SequenceTagger& other);
  SequenceTagger& operator=(const SequenceTagger& other);
  SequenceTagger(SequenceTagger&&) noexcept = default;
  SequenceTagger& operator=(SequenceTagger&&) noexcept = default;

  CasingMode casing() const { return casing_; }
  const TransitionMatrix& transitions() const { return transitions_; }
  TransitionMatrix& transitions() { return transitions_; }
  const EmissionProvider& provider() const { return *provider_; }
  EmissionProvider& provider() { return *provider_; }

  TokenizedText tokenize(std::string_view text) const { return skillrec::tokenize(text, casing_); }
  LabelPath tag(const TokenizedText& text) const;
  std::vector<SkillSpan> extract(const TokenizedText& text) const;

  nlohmann::json to_json() const;
  static SequenceTagger from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static SequenceTagger load(const std::filesystem::path& path);

 private:
  std::unique_ptr<EmissionProvider> provider_;
  CasingMode casing_;
  TransitionMatrix transitions_;
};

/// BIO path to spans. An I-CON that does not continue a span opens one.
std::vector<SkillSpan> spans_from_tags(std::span<const Label> path, const TokenizedText& text);

/// Inverse of spans_from_tags for well-formed, non-overlapping spans.
LabelPath tags_from_spans(std::size_t n_tokens, std::span<const std::pair<std::size_t, std::size_t>> spans);

/// Union of the span sets, deduplicated by token range. votes counts the
/// contributing sets. Sorted by votes desc, length desc, token_start asc.
std::vector<SkillSpan> ensemble_combine(std::span<const std::vector<SkillSpan>> span_sets);

const std::unordered_set<std::string>& default_stoplist();

/// Removes stoplisted and over-long skills and merges plural variants into the
/// plural-stripped form, keeping the highest vote count.
std::vector<SkillSpan> postprocess_skills(std::vector<SkillSpan> spans,
                                          const std::unordered_set<std::string>& stoplist);

// Singular form of the lowercased text's last word: "ies" -> "y"; "es" after
// s, x, z, ch or sh; otherwise a final "s" unless the word ends in ss, us or is.
std::string strip_plural(std::string_view lowercase_text);

std::vector<SkillSpan> extract_skills(const Course& course, std::span<const SequenceTagger> taggers,
                                      const std::unordered_set<std::string>& stoplist);

/// Runs extract_skills over every course and stores the result on the catalog.
void extract_catalog_skills(Catalog& catalog, std::span<const SequenceTagger> taggers,
                            const std::unordered_set<std::string>& stoplist);

// ---------------------------------------------------------------------------
// Training

struct LabeledText {
  TokenizedText text;
  LabelPath gold;
};

struct CrfTrainOptions {
  int epochs = 20;
  double learning_rate = 0.015;
  double momentum = 0.9;
  double lr_decay = 0.05;  // lr_e = lr / (1 + decay * e)
  std::size_t batch_size = 10;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
};

struct CrfTrainReport {
  // Mean NLL over the training set before training, then after each epoch.
  std::vector<double> mean_nll;
};

/// Mini-batch SGD with momentum on the mean CRF negative log-likelihood. The
/// transition matrix and the provider's parameters are updated jointly. The
/// forbidden O -> I-CON entry is never updated.
CrfTrainReport crf_train(SequenceTagger& tagger, std::span<const LabeledText> dataset,
                         const CrfTrainOptions& options);

double mean_nll(const SequenceTagger& tagger, std::span<const LabeledText> dataset);

// ---------------------------------------------------------------------------
// Files

/// UTF-8, one phrase per line; blank lines and surrounding whitespace ignored.
std::vector<std::string> load_phrase_list(const std::filesystem::path& path);

using GoldAnnotations = std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>>;

/// JSON-lines {course_id, spans: [{start_token, end_token}]}.
GoldAnnotations load_gold_annotations(const std::filesystem::path& path);
void save_gold_annotations(const GoldAnnotations& gold, const std::filesystem::path& path);

/// Builds the training set from gold annotations over catalog descriptions.
std::vector<LabeledText> labeled_dataset(const Catalog& catalog, const GoldAnnotations& gold,
                                         CasingMode casing);

nlohmann::json skill_span_to_json(const SkillSpan& s);

}  // namespace skillrec
