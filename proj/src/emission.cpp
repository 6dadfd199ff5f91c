#include "skillrec/emission.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <unordered_map>

#include "skillrec/error.hpp"
#include "skillrec/hash.hpp"

namespace skillrec {

using nlohmann::json;

namespace {

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words{
      "a",     "about", "also",  "an",    "and",   "any",   "are",   "as",    "at",    "be",
      "been",  "both",  "but",   "by",    "can",   "do",    "each",  "for",   "from",  "has",
      "have",  "how",   "in",    "into",  "is",    "it",    "its",   "may",   "more",  "most",
      "not",   "of",    "on",    "or",    "other", "our",   "over",  "such",  "that",  "the",
      "their", "them",  "then",  "these", "they",  "this",  "those", "through", "to",  "under",
      "upon",  "use",   "used",  "using", "various", "was", "we",    "well",  "were",  "what",
      "when",  "which", "while", "who",   "will",  "with",  "within", "without", "would", "you",
      "your",  "also",  "all",   "some",  "many",  "very",  "than",  "there", "so",    "if"};
  return words;
}

bool is_punct_token(const std::string& tok) {
  return tok.size() == 1 && std::ispunct(static_cast<unsigned char>(tok[0]));
}

std::string normalize(const std::string& tok, CasingMode casing) {
  return casing == CasingMode::kUncased ? to_lower_ascii(tok) : tok;
}

// Dense feature ids; hashed spaces follow.
enum DenseFeature : std::size_t {
  kBias = 0,
  kCapitalized,
  kAllCaps,
  kHasDigit,
  kHasHyphen,
  kPunct,
  kFirstToken,
  kLastToken,
  kAfterSentenceEnd,
  kStopword,
  kPrevStopword,
  kNextStopword,
  kPrevPunct,
  kNextPunct,
  kRepeatedInDocument,
  kShortToken,
  kNumDense
};

enum HashSpace : std::size_t { kWord = 0, kPrevWord, kNextWord, kSuffix, kNumHashSpaces };

}  // namespace

bool is_stopword(std::string_view lowercase_token) {
  return stopwords().count(std::string(lowercase_token)) > 0;
}

// ---------------------------------------------------------------------------
// LexiconProvider

LexiconProvider::LexiconProvider(std::vector<std::string> phrases, CasingMode casing)
    : phrases_(std::move(phrases)), casing_(casing) {
  for (const auto& p : phrases_) {
    TokenizedText t = tokenize(p, casing_);
    if (t.empty()) continue;
    std::vector<std::string> pattern;
    for (const auto& tok : t.tokens) pattern.push_back(normalize(tok, casing_));
    max_len_ = std::max(max_len_, pattern.size());
    first_tokens_.insert(pattern.front());
    patterns_.push_back(std::move(pattern));
  }
  // Longest patterns first so the first hit at a position is the longest one.
  std::stable_sort(patterns_.begin(), patterns_.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
}

EmissionMatrix LexiconProvider::emissions(const TokenizedText& text) const {
  const std::size_t n = text.size();
  std::vector<std::string> toks(n);
  for (std::size_t t = 0; t < n; ++t) toks[t] = normalize(text.tokens[t], casing_);

  EmissionMatrix e;
  e.rows.assign(n, LabelScores{kMatchScore, 0.0, 0.0});
  std::size_t t = 0;
  while (t < n) {
    std::size_t matched = 0;
    if (first_tokens_.count(toks[t])) {
      for (const auto& p : patterns_) {
        if (t + p.size() > n) continue;
        if (std::equal(p.begin(), p.end(), toks.begin() + static_cast<std::ptrdiff_t>(t))) {
          matched = p.size();
          break;
        }
      }
    }
    if (matched == 0) {
      ++t;
      continue;
    }
    e.rows[t] = LabelScores{0.0, kMatchScore, 0.0};
    for (std::size_t k = 1; k < matched; ++k) e.rows[t + k] = LabelScores{0.0, 0.0, kMatchScore};
    t += matched;
  }
  return e;
}

json LexiconProvider::to_json() const {
  return json{{"kind", kind()}, {"casing_mode", to_string(casing_)}, {"phrases", phrases_}};
}

std::unique_ptr<EmissionProvider> LexiconProvider::clone() const {
  return std::make_unique<LexiconProvider>(*this);
}

// ---------------------------------------------------------------------------
// FeatureProvider

FeatureProvider::FeatureProvider(std::size_t hash_buckets) : hash_buckets_(hash_buckets) {
  if (hash_buckets_ == 0) throw ValidationError("hash_buckets must be positive");
  weights_.assign(num_features() * kNumLabels, 0.0);
}

std::size_t FeatureProvider::num_features() const {
  return kNumDense + kNumHashSpaces * hash_buckets_;
}

std::vector<std::vector<std::size_t>> FeatureProvider::features(const TokenizedText& text) const {
  const std::size_t n = text.size();
  std::vector<std::string> lower(n);
  std::unordered_map<std::string, int> freq;
  for (std::size_t t = 0; t < n; ++t) {
    lower[t] = to_lower_ascii(text.tokens[t]);
    ++freq[lower[t]];
  }
  auto hashed = [&](HashSpace space, std::string_view key) {
    return kNumDense + space * hash_buckets_ + fnv1a64(key) % hash_buckets_;
  };

  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::string& tok = text.tokens[t];
    auto& f = out[t];
    f.push_back(kBias);
    if (!tok.empty() && std::isupper(static_cast<unsigned char>(tok[0]))) f.push_back(kCapitalized);
    if (tok.size() > 1 && std::all_of(tok.begin(), tok.end(), [](unsigned char c) {
          return !std::isalpha(c) || std::isupper(c);
        }) && std::any_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isalpha(c); }))
      f.push_back(kAllCaps);
    if (std::any_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); }))
      f.push_back(kHasDigit);
    if (tok.find('-') != std::string::npos) f.push_back(kHasHyphen);
    const bool punct = is_punct_token(tok);
    if (punct) f.push_back(kPunct);
    if (t == 0) f.push_back(kFirstToken);
    if (t + 1 == n) f.push_back(kLastToken);
    if (t > 0 && (text.tokens[t - 1] == "." || text.tokens[t - 1] == "?" || text.tokens[t - 1] == "!"))
      f.push_back(kAfterSentenceEnd);
    if (is_stopword(lower[t])) f.push_back(kStopword);
    if (t > 0 && is_stopword(lower[t - 1])) f.push_back(kPrevStopword);
    if (t + 1 < n && is_stopword(lower[t + 1])) f.push_back(kNextStopword);
    if (t > 0 && is_punct_token(text.tokens[t - 1])) f.push_back(kPrevPunct);
    if (t + 1 < n && is_punct_token(text.tokens[t + 1])) f.push_back(kNextPunct);
    if (!punct && freq[lower[t]] > 1) f.push_back(kRepeatedInDocument);
    if (tok.size() <= 2) f.push_back(kShortToken);

    f.push_back(hashed(kWord, lower[t]));
    f.push_back(hashed(kPrevWord, t > 0 ? std::string_view(lower[t - 1]) : "<s>"));
    f.push_back(hashed(kNextWord, t + 1 < n ? std::string_view(lower[t + 1]) : "</s>"));
    const std::string_view lw = lower[t];
    f.push_back(hashed(kSuffix, lw.size() > 3 ? lw.substr(lw.size() - 3) : lw));
  }
  return out;
}

EmissionMatrix FeatureProvider::emissions(const TokenizedText& text) const {
  EmissionMatrix e;
  const auto feats = features(text);
  e.rows.assign(feats.size(), LabelScores{});
  for (std::size_t t = 0; t < feats.size(); ++t) {
    for (std::size_t f : feats[t]) {
      for (std::size_t l = 0; l < kNumLabels; ++l) e.rows[t][l] += weights_[f * kNumLabels + l];
    }
  }
  return e;
}

void FeatureProvider::set_params(std::span<const double> flat) {
  if (flat.size() != weights_.size()) throw ValidationError("feature weight vector has wrong size");
  weights_.assign(flat.begin(), flat.end());
}

void FeatureProvider::accumulate_gradient(const TokenizedText& text,
                                          std::span<const LabelScores> d_emissions,
                                          std::span<double> grad) const {
  const auto feats = features(text);
  for (std::size_t t = 0; t < feats.size(); ++t) {
    for (std::size_t f : feats[t]) {
      for (std::size_t l = 0; l < kNumLabels; ++l) grad[f * kNumLabels + l] += d_emissions[t][l];
    }
  }
}

json FeatureProvider::to_json() const {
  // Only nonzero weights are stored; the hashed spaces are mostly empty.
  std::map<std::size_t, double> sparse;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (weights_[i] != 0.0) sparse.emplace(i, weights_[i]);
  }
  json w = json::array();
  for (const auto& [i, v] : sparse) w.push_back(json::array({i, v}));
  return json{{"kind", kind()}, {"hash_buckets", hash_buckets_}, {"weights", std::move(w)}};
}

std::unique_ptr<EmissionProvider> FeatureProvider::clone() const {
  return std::make_unique<FeatureProvider>(*this);
}

std::unique_ptr<EmissionProvider> provider_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "lexicon") {
    return std::make_unique<LexiconProvider>(
        j.at("phrases").get<std::vector<std::string>>(),
        casing_mode_from_string(j.value("casing_mode", std::string("cased"))));
  }
  if (kind == "feature") {
    auto p = std::make_unique<FeatureProvider>(j.value("hash_buckets", FeatureProvider::kDefaultHashBuckets));
    std::vector<double> w(p->num_params(), 0.0);
    for (const auto& entry : j.at("weights")) {
      const auto i = entry.at(0).get<std::size_t>();
      if (i >= w.size()) throw ValidationError("feature weight index out of range");
      w[i] = entry.at(1).get<double>();
    }
    p->set_params(w);
    return p;
  }
  throw ValidationError("unknown emission provider kind: " + kind);
}

}  // namespace skillrec
