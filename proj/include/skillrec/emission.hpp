#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "skillrec/crf.hpp"
#include "skillrec/text.hpp"

namespace skillrec {

/// Produces per-token label scores for a tokenized text. Providers with
/// learnable parameters expose them as one flat vector so the CRF trainer can
/// update them jointly with the transition matrix.
class EmissionProvider {
 public:
  virtual ~EmissionProvider() = default;

  virtual std::string kind() const = 0;
  virtual EmissionMatrix emissions(const TokenizedText& text) const = 0;

  virtual std::size_t num_params() const { return 0; }
  virtual std::vector<double> params() const { return {}; }
  virtual void set_params(std::span<const double> /*flat*/) {}

  // grad += d loss / d params, given d loss / d emissions for `text`.
  virtual void accumulate_gradient(const TokenizedText& /*text*/,
                                   std::span<const LabelScores> /*d_emissions*/,
                                   std::span<double> /*grad*/) const {}

  virtual nlohmann::json to_json() const = 0;
  virtual std::unique_ptr<EmissionProvider> clone() const = 0;
};

// Gazetteer tagger: greedy longest match of known phrases, scored as a fixed
// one-hot preference per token. Has no learnable parameters.
class LexiconProvider final : public EmissionProvider {
 public:
  static constexpr double kMatchScore = 2.0;

  LexiconProvider(std::vector<std::string> phrases, CasingMode casing);

  std::string kind() const override { return "lexicon"; }
  EmissionMatrix emissions(const TokenizedText& text) const override;
  nlohmann::json to_json() const override;
  std::unique_ptr<EmissionProvider> clone() const override;

  const std::vector<std::string>& phrases() const { return phrases_; }

 private:
  std::vector<std::string> phrases_;
  CasingMode casing_;
  std::vector<std::vector<std::string>> patterns_;  // tokenized, casing-normalized
  std::size_t max_len_ = 0;
  std::unordered_set<std::string> first_tokens_;
};

// Hand-feature tagger: sparse binary token features (shape, position,
// stopword context, in-document frequency, hashed word/neighbour/suffix
// identity) with a learnable weight per (feature, label).
class FeatureProvider final : public EmissionProvider {
 public:
  static constexpr std::size_t kDefaultHashBuckets = 4096;

  explicit FeatureProvider(std::size_t hash_buckets = kDefaultHashBuckets);

  std::string kind() const override { return "feature"; }
  EmissionMatrix emissions(const TokenizedText& text) const override;

  std::size_t num_params() const override { return weights_.size(); }
  std::vector<double> params() const override { return weights_; }
  void set_params(std::span<const double> flat) override;
  void accumulate_gradient(const TokenizedText& text, std::span<const LabelScores> d_emissions,
                           std::span<double> grad) const override;

  nlohmann::json to_json() const override;
  std::unique_ptr<EmissionProvider> clone() const override;

  std::size_t num_features() const;
  // Active feature indices for every token.
  std::vector<std::vector<std::size_t>> features(const TokenizedText& text) const;

 private:
  std::size_t hash_buckets_;
  std::vector<double> weights_;  // num_features x kNumLabels, row-major
};

std::unique_ptr<EmissionProvider> provider_from_json(const nlohmann::json& j);

bool is_stopword(std::string_view lowercase_token);

}  // namespace skillrec
