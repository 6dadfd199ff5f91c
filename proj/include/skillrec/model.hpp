#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "skillrec/catalog.hpp"

namespace skillrec {

using Matrix = Eigen::MatrixXd;

/// Course and major vocabularies. Input token ids reserve 0 for MASK and 1
/// for UNK; course k has input id k + 2 and output index k. Major id 0 means
/// undeclared, 1 an unknown major.
class Vocabulary {
 public:
  static constexpr std::size_t kMaskToken = 0;
  static constexpr std::size_t kUnknownToken = 1;
  static constexpr std::size_t kNumSpecialTokens = 2;
  static constexpr std::size_t kUndeclaredMajor = 0;
  static constexpr std::size_t kUnknownMajor = 1;

  Vocabulary() = default;
  Vocabulary(std::vector<std::string> courses, std::vector<std::string> majors);
  static Vocabulary from_corpus(const Catalog& catalog, std::span<const EnrollmentHistory> histories);

  std::size_t num_courses() const { return courses_.size(); }
  std::size_t num_input_tokens() const { return courses_.size() + kNumSpecialTokens; }
  std::size_t num_major_tokens() const { return majors_.size() + 2; }

  std::size_t input_token(std::string_view course_id) const;    // UNK if absent
  std::optional<std::size_t> output_index(std::string_view course_id) const;
  std::size_t major_token(std::string_view major) const;
  const std::string& course_at(std::size_t output_index) const { return courses_.at(output_index); }

  const std::vector<std::string>& courses() const { return courses_; }
  const std::vector<std::string>& majors() const { return majors_; }

 private:
  std::vector<std::string> courses_;
  std::vector<std::string> majors_;
  std::unordered_map<std::string, std::size_t> course_index_;
  std::unordered_map<std::string, std::size_t> major_index_;
};

/// One student's history flattened to a token sequence. Courses of the same
/// semester share a position index.
struct SequenceExample {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> positions;
  std::vector<std::size_t> majors;  // never empty; undeclared maps to kUndeclaredMajor

  std::size_t size() const { return tokens.size(); }
};

SequenceExample make_example(const EnrollmentHistory& history, const Vocabulary& vocab);

struct MaskedBatch {
  SequenceExample input;              // masked positions hold kMaskToken
  std::vector<std::size_t> masked;    // positions into input.tokens, ascending
  std::vector<std::size_t> targets;   // output indices, parallel to masked
  double mask_rate = 1.0;
};

/// Masks each known-course position independently with probability `rate`;
/// forces one uniformly chosen position when none was drawn.
MaskedBatch mask_sampling(const SequenceExample& example, double rate, std::mt19937_64& rng);
MaskedBatch mask_sampling(const SequenceExample& example, double rate, std::uint64_t seed);

/// Masks exactly the courses of the final semester.
MaskedBatch mask_latest_semester(const SequenceExample& example);

struct ModelConfig {
  std::size_t d_model = 32;
  std::size_t ffn_dim = 64;
  std::size_t max_positions = 16;
  double init_scale = 0.1;
  std::uint64_t seed = 0;
  std::size_t heads = 4;  // must divide d_model
  bool tie_output = true;  // add course embeddings to the output projection
};

/// Embeddings, one bidirectional multi-head self-attention block with a residual tanh
/// feed-forward, and an output projection over courses.
struct ModelParams {
  ModelConfig config;
  Matrix course_embedding;    // input tokens x d
  Matrix position_embedding;  // max_positions x d
  Matrix major_embedding;     // major tokens x d
  Matrix w_query, w_key, w_value, w_out;  // d x d
  Matrix ffn_in;              // d x ffn
  Matrix ffn_in_bias;         // 1 x ffn
  Matrix ffn_out;             // ffn x d
  Matrix ffn_out_bias;        // 1 x d
  Matrix output;              // d x courses
  Matrix output_bias;         // 1 x courses

  static ModelParams init(const ModelConfig& config, const Vocabulary& vocab);
  static ModelParams zeros_like(const ModelParams& p);

  // Visits every parameter group in a fixed order.
  void for_each(const std::function<void(std::string_view, Matrix&)>& fn);
  void for_each(const std::function<void(std::string_view, const Matrix&)>& fn) const;

  std::size_t num_courses() const { return static_cast<std::size_t>(output.cols()); }
  bool all_finite() const;
  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

struct ForwardResult {
  Matrix logits;     // n_masked x courses
  Matrix attention;  // n x n head average, rows sum to 1
};

ForwardResult model_forward(const ModelParams& params, const MaskedBatch& batch);

/// Mean cross-entropy over every masked position in `batches`. When `grad` is
/// given it receives the gradient (same shapes as params, overwritten).
/// `smoothing` mixes that much of a uniform target into each one-hot target.
double masked_loss(const ModelParams& params, std::span<const MaskedBatch> batches,
                   ModelParams* grad = nullptr, double smoothing = 0.0);

struct ModelTrainOptions {
  int pretrain_epochs = 20;
  int finetune_epochs = 40;
  double learning_rate = 0.01;
  double mask_rate = 0.2;
  double weight_decay = 0.0;
  double context_dropout = 0.2;  // fine-tuning only
  double label_smoothing = 0.2;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
};

struct ModelTrainReport {
  std::vector<double> pretrain_loss;  // mean batch loss per epoch
  std::vector<double> finetune_loss;
};

/// Adam on masked cross-entropy: percentage-sampling epochs, then
/// latest-semester epochs. Histories with one semester are only used in the
/// first phase.
ModelTrainReport train_model(ModelParams& params, const Vocabulary& vocab,
                             std::span<const EnrollmentHistory> corpus,
                             const ModelTrainOptions& options);

/// Latest-semester cross-entropy over histories with at least two semesters.
double heldout_loss(const ModelParams& params, const Vocabulary& vocab,
                    std::span<const EnrollmentHistory> histories);

/// Bundle persisted as the model checkpoint.
struct TrainedModel {
  Vocabulary vocab;
  ModelParams params;

  nlohmann::json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static TrainedModel load(const std::filesystem::path& path);

  /// Probabilities over courses for one appended masked position after the
  /// given semesters.
  std::vector<double> next_semester_distribution(const std::vector<Semester>& semesters,
                                                 const std::vector<std::string>& major) const;
};

}  // namespace skillrec
