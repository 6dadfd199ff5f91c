#include "skillrec/tagger.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "skillrec/error.hpp"

namespace skillrec {

using nlohmann::json;

namespace {

constexpr int kTaggerFormatVersion = 1;

bool ensemble_order(const SkillSpan& a, const SkillSpan& b) {
  if (a.votes != b.votes) return a.votes > b.votes;
  const auto la = a.token_end - a.token_start;
  const auto lb = b.token_end - b.token_start;
  if (la != lb) return la > lb;
  if (a.token_start != b.token_start) return a.token_start < b.token_start;
  return a.text < b.text;
}

json transitions_to_json(const TransitionMatrix& t) {
  json m = json::array();
  for (const auto& row : t.scores) m.push_back(json(std::vector<double>(row.begin(), row.end())));
  return json{{"matrix", m},
              {"start", std::vector<double>(t.start.begin(), t.start.end())},
              {"stop", std::vector<double>(t.stop.begin(), t.stop.end())}};
}

TransitionMatrix transitions_from_json(const json& j) {
  TransitionMatrix t;
  const auto& m = j.at("matrix");
  if (m.size() != kNumLabels) throw ValidationError("transition matrix must be 3x3");
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    const auto row = m.at(i).get<std::vector<double>>();
    if (row.size() != kNumLabels) throw ValidationError("transition matrix must be 3x3");
    std::copy(row.begin(), row.end(), t.scores[i].begin());
  }
  const auto start = j.at("start").get<std::vector<double>>();
  const auto stop = j.at("stop").get<std::vector<double>>();
  if (start.size() != kNumLabels || stop.size() != kNumLabels)
    throw ValidationError("start/stop vectors must have 3 entries");
  std::copy(start.begin(), start.end(), t.start.begin());
  std::copy(stop.begin(), stop.end(), t.stop.begin());
  return t;
}

constexpr std::size_t kForbiddenFlatIndex = index(Label::kO) * kNumLabels + index(Label::kInside);

}  // namespace

// ---------------------------------------------------------------------------
// SequenceTagger

SequenceTagger::SequenceTagger(std::unique_ptr<EmissionProvider> provider, CasingMode casing,
                               TransitionMatrix transitions)
    : provider_(std::move(provider)), casing_(casing), transitions_(transitions) {
  if (!provider_) throw ValidationError("tagger needs an emission provider");
}

SequenceTagger::SequenceTagger(const SequenceTagger& other)
    : provider_(other.provider_->clone()), casing_(other.casing_), transitions_(other.transitions_) {}

SequenceTagger& SequenceTagger::operator=(const SequenceTagger& other) {
  if (this != &other) {
    provider_ = other.provider_->clone();
    casing_ = other.casing_;
    transitions_ = other.transitions_;
  }
  return *this;
}

LabelPath SequenceTagger::tag(const TokenizedText& text) const {
  return viterbi_decode(provider_->emissions(text), transitions_);
}

std::vector<SkillSpan> SequenceTagger::extract(const TokenizedText& text) const {
  return spans_from_tags(tag(text), text);
}

json SequenceTagger::to_json() const {
  return json{{"format", "skillrec-tagger"},
              {"version", kTaggerFormatVersion},
              {"casing_mode", to_string(casing_)},
              {"transitions", transitions_to_json(transitions_)},
              {"provider", provider_->to_json()}};
}

SequenceTagger SequenceTagger::from_json(const json& j) {
  try {
    if (j.value("format", std::string{}) != "skillrec-tagger")
      throw ValidationError("not a tagger model file");
    if (j.at("version").get<int>() != kTaggerFormatVersion)
      throw ValidationError("unsupported tagger model version");
    return SequenceTagger(provider_from_json(j.at("provider")),
                          casing_mode_from_string(j.at("casing_mode").get<std::string>()),
                          transitions_from_json(j.at("transitions")));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed tagger model: ") + e.what());
  }
}

void SequenceTagger::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write tagger model: " + path.string());
  out << to_json().dump(1) << '\n';
}

SequenceTagger SequenceTagger::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open tagger model: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 1, e.what());
  }
  return from_json(j);
}

// ---------------------------------------------------------------------------
// Span handling

std::vector<SkillSpan> spans_from_tags(std::span<const Label> path, const TokenizedText& text) {
  std::vector<SkillSpan> spans;
  const std::size_t n = std::min(path.size(), text.size());
  std::size_t t = 0;
  while (t < n) {
    if (path[t] == Label::kO) {
      ++t;
      continue;
    }
    // B-CON, or an I-CON with nothing to continue: either way a span opens here.
    const std::size_t start = t++;
    while (t < n && path[t] == Label::kInside) ++t;
    spans.push_back(SkillSpan{text.detokenize(start, t), start, t, 1});
  }
  return spans;
}

LabelPath tags_from_spans(std::size_t n_tokens,
                          std::span<const std::pair<std::size_t, std::size_t>> spans) {
  LabelPath path(n_tokens, Label::kO);
  for (const auto& [start, end] : spans) {
    if (start >= end || end > n_tokens)
      throw ValidationError("span [" + std::to_string(start) + ", " + std::to_string(end) +
                            ") out of range for " + std::to_string(n_tokens) + " tokens");
    for (std::size_t t = start; t < end; ++t) {
      if (path[t] != Label::kO) throw ValidationError("overlapping gold spans");
      path[t] = t == start ? Label::kBegin : Label::kInside;
    }
  }
  return path;
}

std::vector<SkillSpan> ensemble_combine(std::span<const std::vector<SkillSpan>> span_sets) {
  if (span_sets.empty()) throw ValidationError("ensemble needs at least one tagger output");
  std::map<std::pair<std::size_t, std::size_t>, SkillSpan> merged;
  for (const auto& set : span_sets) {
    for (const auto& s : set) {
      auto [it, inserted] = merged.try_emplace({s.token_start, s.token_end}, s);
      if (!inserted) it->second.votes += s.votes;
    }
  }
  std::vector<SkillSpan> out;
  out.reserve(merged.size());
  for (auto& [key, span] : merged) out.push_back(std::move(span));
  std::sort(out.begin(), out.end(), ensemble_order);
  return out;
}

const std::unordered_set<std::string>& default_stoplist() {
  static const std::unordered_set<std::string> stoplist{
      "homework", "student", "students", "seminar", "course", "lecture", "class", "exam"};
  return stoplist;
}

std::string strip_plural(std::string_view lowercase_text) {
  std::string s(lowercase_text);
  if (s.size() <= 3) return s;
  if (s.ends_with("ies") && s.size() > 4) return s.substr(0, s.size() - 3) + "y";
  for (std::string_view suffix : {"sses", "xes", "zes", "ches", "shes"}) {
    if (s.ends_with(suffix)) return s.substr(0, s.size() - 2);
  }
  if (s.ends_with("ss") || s.ends_with("us") || s.ends_with("is")) return s;
  if (s.ends_with("s")) return s.substr(0, s.size() - 1);
  return s;
}

std::vector<SkillSpan> postprocess_skills(std::vector<SkillSpan> spans,
                                          const std::unordered_set<std::string>& stoplist) {
  std::erase_if(spans, [&](const SkillSpan& s) {
    return stoplist.count(to_lower_ascii(s.text)) > 0 || count_words(s.text) > kMaxSkillWords ||
           count_words(s.text) == 0;
  });

  // Merging can produce a canonical form whose own stripped key collides with
  // another group, so repeat until no two texts share a key.
  bool changed = true;
  while (changed) {
    changed = false;
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < spans.size(); ++i)
      groups[strip_plural(to_lower_ascii(spans[i].text))].push_back(i);

    std::vector<SkillSpan> merged;
    for (auto& [key, members] : groups) {
      if (members.size() == 1) {
        merged.push_back(spans[members.front()]);
        continue;
      }
      changed = true;
      int votes = 0;
      std::set<std::string> distinct;
      for (std::size_t i : members) {
        votes = std::max(votes, spans[i].votes);
        distinct.insert(to_lower_ascii(spans[i].text));
      }
      // Prefer a member already in the stripped form so its range matches its text.
      std::size_t keep = members.front();
      for (std::size_t i : members) {
        if (to_lower_ascii(spans[i].text) == key) {
          keep = i;
          break;
        }
        if (ensemble_order(spans[i], spans[keep])) keep = i;
      }
      SkillSpan s = spans[keep];
      s.votes = votes;
      if (distinct.size() > 1 && to_lower_ascii(s.text) != key) s.text = key;
      merged.push_back(std::move(s));
    }
    spans = std::move(merged);
  }
  std::sort(spans.begin(), spans.end(), ensemble_order);
  return spans;
}

std::vector<SkillSpan> extract_skills(const Course& course, std::span<const SequenceTagger> taggers,
                                      const std::unordered_set<std::string>& stoplist) {
  if (taggers.empty()) throw ValidationError("extraction needs at least one tagger");
  std::vector<std::vector<SkillSpan>> outputs;
  outputs.reserve(taggers.size());
  for (const auto& tagger : taggers) outputs.push_back(tagger.extract(tagger.tokenize(course.description)));
  return postprocess_skills(ensemble_combine(outputs), stoplist);
}

void extract_catalog_skills(Catalog& catalog, std::span<const SequenceTagger> taggers,
                            const std::unordered_set<std::string>& stoplist) {
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    catalog.set_skills(i, extract_skills(catalog[i], taggers, stoplist));
  }
}

// ---------------------------------------------------------------------------
// Training

double mean_nll(const SequenceTagger& tagger, std::span<const LabeledText> dataset) {
  if (dataset.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : dataset) {
    total -= crf_log_likelihood(tagger.provider().emissions(ex.text), tagger.transitions(), ex.gold);
  }
  return total / static_cast<double>(dataset.size());
}

CrfTrainReport crf_train(SequenceTagger& tagger, std::span<const LabeledText> input,
                         const CrfTrainOptions& options) {
  if (input.empty()) throw ValidationError("cannot train a tagger on an empty dataset");
  if (options.batch_size == 0) throw ValidationError("batch_size must be positive");

  // Retokenize under the tagger's casing mode; token boundaries are casing-independent.
  std::vector<LabeledText> dataset;
  dataset.reserve(input.size());
  for (const auto& ex : input) {
    if (ex.gold.size() != ex.text.size())
      throw ValidationError("gold path length does not match token count");
    if (!path_is_valid(ex.gold))
      throw ValidationError("gold path contains forbidden O -> I-CON transition");
    LabeledText copy{ex.text.casing_mode == tagger.casing() ? ex.text
                                                            : tagger.tokenize(ex.text.source),
                     ex.gold};
    if (copy.text.size() != copy.gold.size())
      throw ValidationError("retokenization changed the token count");
    dataset.push_back(std::move(copy));
  }

  EmissionProvider& provider = tagger.provider();
  const std::size_t n_trans = TransitionMatrix::kNumParams;
  const std::size_t n_params = n_trans + provider.num_params();
  std::vector<double> theta(n_params);
  {
    const auto flat = tagger.transitions().flatten();
    std::copy(flat.begin(), flat.end(), theta.begin());
    const auto p = provider.params();
    std::copy(p.begin(), p.end(), theta.begin() + static_cast<std::ptrdiff_t>(n_trans));
  }
  std::vector<double> velocity(n_params, 0.0);
  std::vector<double> grad(n_params);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed);

  CrfTrainReport report;
  report.mean_nll.push_back(mean_nll(tagger, dataset));

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const double lr = options.learning_rate / (1.0 + options.lr_decay * epoch);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += options.batch_size) {
      const std::size_t e = std::min(order.size(), b + options.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      const auto trans = tagger.transitions();
      for (std::size_t k = b; k < e; ++k) {
        const auto& ex = dataset[order[k]];
        const CrfGradient g = crf_nll_gradient(provider.emissions(ex.text), trans, ex.gold);
        const auto gt = g.transitions.flatten();
        for (std::size_t i = 0; i < n_trans; ++i) grad[i] += gt[i];
        provider.accumulate_gradient(ex.text, g.emissions,
                                     std::span<double>(grad).subspan(n_trans));
      }
      const double scale = 1.0 / static_cast<double>(e - b);
      double norm2 = 0.0;
      for (double& g : grad) {
        g *= scale;
        norm2 += g * g;
      }
      grad[kForbiddenFlatIndex] = 0.0;
      const double norm = std::sqrt(norm2);
      const double clip = (options.clip_norm > 0.0 && norm > options.clip_norm) ? options.clip_norm / norm : 1.0;
      for (std::size_t i = 0; i < n_params; ++i) {
        velocity[i] = options.momentum * velocity[i] - lr * clip * grad[i];
        theta[i] += velocity[i];
      }
      theta[kForbiddenFlatIndex] = kForbiddenScore;
      tagger.transitions() = TransitionMatrix::unflatten(std::span<const double>(theta).first(n_trans));
      provider.set_params(std::span<const double>(theta).subspan(n_trans));
    }
    report.mean_nll.push_back(mean_nll(tagger, dataset));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Files

std::vector<std::string> load_phrase_list(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open phrase list: " + path.string());
  std::vector<std::string> phrases;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r\n");
    phrases.push_back(line.substr(b, e - b + 1));
  }
  return phrases;
}

GoldAnnotations load_gold_annotations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open gold annotations: " + path.string());
  GoldAnnotations gold;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json row = json::parse(line);
      auto& spans = gold[row.at("course_id").get<std::string>()];
      for (const auto& s : row.at("spans")) {
        spans.emplace_back(s.at("start_token").get<std::size_t>(), s.at("end_token").get<std::size_t>());
      }
    } catch (const json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return gold;
}

void save_gold_annotations(const GoldAnnotations& gold, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write gold annotations: " + path.string());
  for (const auto& [id, spans] : gold) {
    json js = json::array();
    for (const auto& [s, e] : spans) js.push_back(json{{"start_token", s}, {"end_token", e}});
    out << json{{"course_id", id}, {"spans", js}}.dump() << '\n';
  }
}

std::vector<LabeledText> labeled_dataset(const Catalog& catalog, const GoldAnnotations& gold,
                                         CasingMode casing) {
  std::vector<LabeledText> out;
  for (const auto& [id, spans] : gold) {
    const Course& c = catalog.at(id);
    LabeledText ex{tokenize(c.description, casing), {}};
    auto sorted = spans;
    std::sort(sorted.begin(), sorted.end());
    ex.gold = tags_from_spans(ex.text.size(), sorted);
    out.push_back(std::move(ex));
  }
  return out;
}

json skill_span_to_json(const SkillSpan& s) {
  return json{{"text", s.text}, {"token_start", s.token_start}, {"token_end", s.token_end},
              {"votes", s.votes}};
}

}  // namespace skillrec
