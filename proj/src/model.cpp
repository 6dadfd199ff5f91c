#include "skillrec/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "skillrec/error.hpp"

namespace skillrec {

using nlohmann::json;

namespace {

constexpr int kModelFormatVersion = 1;

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  // Column-major fill order is part of the determinism contract.
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
  return m;
}

Matrix row_softmax(const Matrix& s) {
  Matrix out(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double hi = s.row(i).maxCoeff();
    out.row(i) = (s.row(i).array() - hi).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

// Intermediate activations kept for the backward pass.
struct Activations {
  Matrix x;     // n x d, input embeddings
  Matrix q, k, v;
  std::vector<Matrix> attn;  // per head, n x n
  Matrix h;                  // per-head attn * v, concatenated
  Matrix z;     // x + h * w_out
  Matrix g;     // tanh(z * ffn_in + b)
  Matrix y;     // z + g * ffn_out + b
  Matrix logits;
  std::vector<std::size_t> pos;
};

// Output projection, optionally tied to the course input embeddings.
Matrix output_weights(const ModelParams& p) {
  if (!p.config.tie_output) return p.output;
  return p.output + p.course_embedding.middleRows(Vocabulary::kNumSpecialTokens, p.output.cols()).transpose();
}

Activations run_forward(const ModelParams& p, const MaskedBatch& batch) {
  const SequenceExample& ex = batch.input;
  const auto n = static_cast<Eigen::Index>(ex.size());
  const auto d = static_cast<Eigen::Index>(p.config.d_model);
  if (n == 0) throw ValidationError("model input is empty");
  if (ex.positions.size() != ex.tokens.size()) throw ValidationError("positions/tokens length mismatch");
  if (ex.majors.empty()) throw ValidationError("example needs at least one major token");

  Activations a;
  Eigen::RowVectorXd major_mean = Eigen::RowVectorXd::Zero(d);
  for (std::size_t m : ex.majors) {
    if (m >= static_cast<std::size_t>(p.major_embedding.rows())) throw ValidationError("major token out of range");
    major_mean += p.major_embedding.row(static_cast<Eigen::Index>(m));
  }
  major_mean /= static_cast<double>(ex.majors.size());

  const auto max_pos = static_cast<std::size_t>(p.position_embedding.rows());
  a.x.resize(n, d);
  a.pos.resize(ex.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t tok = ex.tokens[static_cast<std::size_t>(i)];
    if (tok >= static_cast<std::size_t>(p.course_embedding.rows())) throw ValidationError("token id out of vocabulary");
    a.pos[i] = std::min(ex.positions[static_cast<std::size_t>(i)], max_pos - 1);
    a.x.row(i) = p.course_embedding.row(static_cast<Eigen::Index>(tok)) +
                 p.position_embedding.row(static_cast<Eigen::Index>(a.pos[i])) + major_mean;
  }

  const auto heads = static_cast<Eigen::Index>(p.config.heads);
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  a.q = a.x * p.w_query;
  a.k = a.x * p.w_key;
  a.v = a.x * p.w_value;
  a.h.resize(n, d);
  a.attn.resize(static_cast<std::size_t>(heads));
  for (Eigen::Index hd = 0; hd < heads; ++hd) {
    auto& att = a.attn[static_cast<std::size_t>(hd)];
    att = row_softmax(a.q.middleCols(hd * dh, dh) * a.k.middleCols(hd * dh, dh).transpose() * scale);
    a.h.middleCols(hd * dh, dh) = att * a.v.middleCols(hd * dh, dh);
  }
  a.z = a.x + a.h * p.w_out;
  a.g = ((a.z * p.ffn_in).rowwise() + p.ffn_in_bias.row(0)).array().tanh().matrix();
  a.y = a.z + ((a.g * p.ffn_out).rowwise() + p.ffn_out_bias.row(0));

  const Matrix w_logits = output_weights(p);
  a.logits.resize(static_cast<Eigen::Index>(batch.masked.size()), p.output.cols());
  for (std::size_t m = 0; m < batch.masked.size(); ++m) {
    if (batch.masked[m] >= ex.size()) throw ValidationError("masked position out of range");
    a.logits.row(static_cast<Eigen::Index>(m)) =
        a.y.row(static_cast<Eigen::Index>(batch.masked[m])) * w_logits + p.output_bias;
  }
  return a;
}

// Adds the gradient of `weight` * sum of CE over this batch's masked positions.
double accumulate_backward(const ModelParams& p, const MaskedBatch& batch, double weight, double smoothing,
                           ModelParams& grad) {
  const Activations a = run_forward(p, batch);
  const SequenceExample& ex = batch.input;
  const auto n = static_cast<Eigen::Index>(ex.size());
  const auto d = static_cast<Eigen::Index>(p.config.d_model);
  const auto heads = static_cast<Eigen::Index>(p.config.heads);
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  double loss = 0.0;
  const Matrix w_logits = output_weights(p);
  Matrix d_wlogits = Matrix::Zero(d, p.output.cols());
  Matrix dy = Matrix::Zero(n, d);
  for (std::size_t m = 0; m < batch.masked.size(); ++m) {
    const auto row = static_cast<Eigen::Index>(m);
    const auto target = static_cast<Eigen::Index>(batch.targets[m]);
    if (target >= a.logits.cols()) throw ValidationError("target index out of range");
    const double hi = a.logits.row(row).maxCoeff();
    Eigen::RowVectorXd probs = (a.logits.row(row).array() - hi).exp().matrix();
    const double z = probs.sum();
    const double lse = std::log(z) + hi;
    loss += (1.0 - smoothing) * (lse - a.logits(row, target)) + smoothing * (lse - a.logits.row(row).mean());
    probs /= z;
    probs(target) -= 1.0 - smoothing;
    probs.array() -= smoothing / static_cast<double>(probs.size());
    probs *= weight;
    const auto pos = static_cast<Eigen::Index>(batch.masked[m]);
    d_wlogits += a.y.row(pos).transpose() * probs;
    grad.output_bias += probs;
    dy.row(pos) += probs * w_logits.transpose();
  }
  grad.output += d_wlogits;
  if (p.config.tie_output)
    grad.course_embedding.middleRows(Vocabulary::kNumSpecialTokens, d_wlogits.cols()) += d_wlogits.transpose();

  // y = z + tanh(z W1 + b1) W2 + b2
  Matrix dz = dy;
  grad.ffn_out += a.g.transpose() * dy;
  grad.ffn_out_bias += dy.colwise().sum();
  const Matrix du = ((dy * p.ffn_out.transpose()).array() * (1.0 - a.g.array().square())).matrix();
  grad.ffn_in += a.z.transpose() * du;
  grad.ffn_in_bias += du.colwise().sum();
  dz += du * p.ffn_in.transpose();

  // z = x + (A V) Wo
  Matrix dx = dz;
  grad.w_out += a.h.transpose() * dz;
  const Matrix d_h = dz * p.w_out.transpose();
  Matrix dq(n, d), dk(n, d), dv(n, d);
  for (Eigen::Index hd = 0; hd < heads; ++hd) {
    const Matrix& att = a.attn[static_cast<std::size_t>(hd)];
    const auto cols = [&](const Matrix& m) { return m.middleCols(hd * dh, dh); };
    const Matrix d_attn = cols(d_h) * cols(a.v).transpose();
    dv.middleCols(hd * dh, dh) = att.transpose() * cols(d_h);
    // Softmax backward, row by row.
    const Eigen::VectorXd row_dot = (d_attn.array() * att.array()).rowwise().sum();
    const Matrix ds = (att.array() * (d_attn.colwise() - row_dot).array()).matrix();
    dq.middleCols(hd * dh, dh) = ds * cols(a.k) * scale;
    dk.middleCols(hd * dh, dh) = ds.transpose() * cols(a.q) * scale;
  }
  grad.w_query += a.x.transpose() * dq;
  grad.w_key += a.x.transpose() * dk;
  grad.w_value += a.x.transpose() * dv;
  dx += dq * p.w_query.transpose() + dk * p.w_key.transpose() + dv * p.w_value.transpose();

  Eigen::RowVectorXd dx_sum = Eigen::RowVectorXd::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    grad.course_embedding.row(static_cast<Eigen::Index>(ex.tokens[static_cast<std::size_t>(i)])) += dx.row(i);
    grad.position_embedding.row(static_cast<Eigen::Index>(a.pos[static_cast<std::size_t>(i)])) += dx.row(i);
    dx_sum += dx.row(i);
  }
  const double inv_majors = 1.0 / static_cast<double>(ex.majors.size());
  for (std::size_t m : ex.majors) grad.major_embedding.row(static_cast<Eigen::Index>(m)) += dx_sum * inv_majors;
  return loss;
}

json matrix_to_json(const Matrix& m) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  // Row-major on disk.
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data[k++] = m(r, c);
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ValidationError("matrix data has wrong size");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++];
  return m;
}

struct AdamState {
  ModelParams m, v;
  long step = 0;
};

// Decoupled weight decay (AdamW) when `decay` > 0.
void adam_update(ModelParams& params, const ModelParams& grad, AdamState& st, double lr, double decay) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  ++st.step;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(st.step));
  std::vector<Matrix*> p_groups, m_groups, v_groups;
  std::vector<const Matrix*> g_groups;
  params.for_each([&](std::string_view, Matrix& m) { p_groups.push_back(&m); });
  st.m.for_each([&](std::string_view, Matrix& m) { m_groups.push_back(&m); });
  st.v.for_each([&](std::string_view, Matrix& m) { v_groups.push_back(&m); });
  grad.for_each([&](std::string_view, const Matrix& m) { g_groups.push_back(&m); });
  for (std::size_t i = 0; i < p_groups.size(); ++i) {
    const Matrix& g = *g_groups[i];
    *m_groups[i] = kBeta1 * *m_groups[i] + (1.0 - kBeta1) * g;
    *v_groups[i] = kBeta2 * *v_groups[i] + (1.0 - kBeta2) * g.cwiseProduct(g);
    const Matrix step =
        ((m_groups[i]->array() / c1) / ((v_groups[i]->array() / c2).sqrt() + kEps)).matrix();
    if (decay > 0.0) *p_groups[i] *= 1.0 - lr * decay;
    *p_groups[i] -= lr * step;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> courses, std::vector<std::string> majors)
    : courses_(std::move(courses)), majors_(std::move(majors)) {
  for (std::size_t i = 0; i < courses_.size(); ++i) {
    if (!course_index_.emplace(courses_[i], i).second) throw ValidationError("duplicate course in vocabulary: " + courses_[i]);
  }
  for (std::size_t i = 0; i < majors_.size(); ++i) {
    if (!major_index_.emplace(majors_[i], i).second) throw ValidationError("duplicate major in vocabulary: " + majors_[i]);
  }
}

Vocabulary Vocabulary::from_corpus(const Catalog& catalog, std::span<const EnrollmentHistory> histories) {
  std::vector<std::string> courses;
  courses.reserve(catalog.size());
  for (const auto& c : catalog.courses()) courses.push_back(c.id);
  std::set<std::string> majors;
  for (const auto& h : histories) majors.insert(h.major.begin(), h.major.end());
  return Vocabulary(std::move(courses), std::vector<std::string>(majors.begin(), majors.end()));
}

std::size_t Vocabulary::input_token(std::string_view course_id) const {
  auto it = course_index_.find(std::string(course_id));
  return it == course_index_.end() ? kUnknownToken : it->second + kNumSpecialTokens;
}

std::optional<std::size_t> Vocabulary::output_index(std::string_view course_id) const {
  auto it = course_index_.find(std::string(course_id));
  if (it == course_index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::major_token(std::string_view major) const {
  auto it = major_index_.find(std::string(major));
  return it == major_index_.end() ? kUnknownMajor : it->second + 2;
}

// ---------------------------------------------------------------------------
// Examples and masking

SequenceExample make_example(const EnrollmentHistory& history, const Vocabulary& vocab) {
  SequenceExample ex;
  for (std::size_t s = 0; s < history.semesters.size(); ++s) {
    for (const auto& id : history.semesters[s]) {
      ex.tokens.push_back(vocab.input_token(id));
      ex.positions.push_back(s);
    }
  }
  for (const auto& m : history.major) ex.majors.push_back(vocab.major_token(m));
  if (ex.majors.empty()) ex.majors.push_back(Vocabulary::kUndeclaredMajor);
  return ex;
}

namespace {

MaskedBatch apply_mask(const SequenceExample& example, std::vector<std::size_t> masked, double rate) {
  MaskedBatch b;
  b.input = example;
  b.mask_rate = rate;
  std::sort(masked.begin(), masked.end());
  for (std::size_t i : masked) {
    b.targets.push_back(example.tokens[i] - Vocabulary::kNumSpecialTokens);
    b.input.tokens[i] = Vocabulary::kMaskToken;
  }
  b.masked = std::move(masked);
  return b;
}

}  // namespace

MaskedBatch mask_sampling(const SequenceExample& example, double rate, std::mt19937_64& rng) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ValidationError("mask rate must be in (0, 1]");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < example.size(); ++i) {
    if (example.tokens[i] >= Vocabulary::kNumSpecialTokens) eligible.push_back(i);
  }
  if (eligible.empty()) throw ValidationError("cannot mask an example without known courses");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<std::size_t> masked;
  for (std::size_t i : eligible) {
    if (coin(rng) < rate) masked.push_back(i);
  }
  if (masked.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
    masked.push_back(eligible[pick(rng)]);
  }
  return apply_mask(example, std::move(masked), rate);
}

MaskedBatch mask_sampling(const SequenceExample& example, double rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return mask_sampling(example, rate, rng);
}

MaskedBatch mask_latest_semester(const SequenceExample& example) {
  if (example.size() == 0) throw ValidationError("cannot mask an empty example");
  const std::size_t last = *std::max_element(example.positions.begin(), example.positions.end());
  const std::size_t first = *std::min_element(example.positions.begin(), example.positions.end());
  if (last == first) throw ValidationError("latest-semester masking needs at least two semesters");
  std::vector<std::size_t> masked;
  for (std::size_t i = 0; i < example.size(); ++i) {
    if (example.positions[i] == last && example.tokens[i] >= Vocabulary::kNumSpecialTokens) masked.push_back(i);
  }
  if (masked.empty()) throw ValidationError("final semester has no known courses");
  MaskedBatch b = apply_mask(example, std::move(masked), 1.0);
  return b;
}

// ---------------------------------------------------------------------------
// Parameters

ModelParams ModelParams::init(const ModelConfig& config, const Vocabulary& vocab) {
  if (config.d_model == 0 || config.ffn_dim == 0 || config.max_positions == 0 || config.heads == 0)
    throw ValidationError("model dimensions must be positive");
  if (config.d_model % config.heads != 0) throw ValidationError("heads must divide d_model");
  if (vocab.num_courses() == 0) throw ValidationError("model needs a nonempty course vocabulary");
  std::mt19937_64 rng(config.seed);
  const auto d = static_cast<Eigen::Index>(config.d_model);
  const auto f = static_cast<Eigen::Index>(config.ffn_dim);
  const auto v = static_cast<Eigen::Index>(vocab.num_courses());
  const double s = config.init_scale;
  ModelParams p;
  p.config = config;
  p.course_embedding = random_matrix(static_cast<Eigen::Index>(vocab.num_input_tokens()), d, s, rng);
  p.position_embedding = random_matrix(static_cast<Eigen::Index>(config.max_positions), d, s, rng);
  p.major_embedding = random_matrix(static_cast<Eigen::Index>(vocab.num_major_tokens()), d, s, rng);
  const double ws = 1.0 / std::sqrt(static_cast<double>(d));
  p.w_query = random_matrix(d, d, ws, rng);
  p.w_key = random_matrix(d, d, ws, rng);
  p.w_value = random_matrix(d, d, ws, rng);
  p.w_out = random_matrix(d, d, ws, rng);
  p.ffn_in = random_matrix(d, f, ws, rng);
  p.ffn_in_bias = Matrix::Zero(1, f);
  p.ffn_out = random_matrix(f, d, 1.0 / std::sqrt(static_cast<double>(f)), rng);
  p.ffn_out_bias = Matrix::Zero(1, d);
  p.output = random_matrix(d, v, ws, rng);
  p.output_bias = Matrix::Zero(1, v);
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& src) {
  ModelParams p = src;
  p.for_each([](std::string_view, Matrix& m) { m.setZero(); });
  return p;
}

void ModelParams::for_each(const std::function<void(std::string_view, Matrix&)>& fn) {
  fn("course_embedding", course_embedding);
  fn("position_embedding", position_embedding);
  fn("major_embedding", major_embedding);
  fn("w_query", w_query);
  fn("w_key", w_key);
  fn("w_value", w_value);
  fn("w_out", w_out);
  fn("ffn_in", ffn_in);
  fn("ffn_in_bias", ffn_in_bias);
  fn("ffn_out", ffn_out);
  fn("ffn_out_bias", ffn_out_bias);
  fn("output", output);
  fn("output_bias", output_bias);
}

void ModelParams::for_each(const std::function<void(std::string_view, const Matrix&)>& fn) const {
  const_cast<ModelParams*>(this)->for_each([&](std::string_view name, Matrix& m) { fn(name, m); });
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each([&](std::string_view, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  std::vector<const Matrix*> ga, gb;
  a.for_each([&](std::string_view, const Matrix& m) { ga.push_back(&m); });
  b.for_each([&](std::string_view, const Matrix& m) { gb.push_back(&m); });
  for (std::size_t i = 0; i < ga.size(); ++i) {
    if (ga[i]->rows() != gb[i]->rows() || ga[i]->cols() != gb[i]->cols() || *ga[i] != *gb[i]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Forward, loss, training

ForwardResult model_forward(const ModelParams& params, const MaskedBatch& batch) {
  Activations a = run_forward(params, batch);
  Matrix mean = Matrix::Zero(a.attn[0].rows(), a.attn[0].cols());
  for (const auto& att : a.attn) mean += att;
  mean /= static_cast<double>(a.attn.size());
  return ForwardResult{std::move(a.logits), std::move(mean)};
}

double masked_loss(const ModelParams& params, std::span<const MaskedBatch> batches, ModelParams* grad,
                   double smoothing) {
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ValidationError("label smoothing must be in [0, 1)");
  std::size_t total = 0;
  for (const auto& b : batches) total += b.masked.size();
  if (total == 0) throw ValidationError("no masked positions to score");
  const double weight = 1.0 / static_cast<double>(total);
  ModelParams scratch;
  ModelParams& g = grad ? *grad : scratch;
  g = ModelParams::zeros_like(params);
  double loss = 0.0;
  for (const auto& b : batches) loss += accumulate_backward(params, b, weight, smoothing, g);
  return loss * weight;
}

ModelTrainReport train_model(ModelParams& params, const Vocabulary& vocab,
                             std::span<const EnrollmentHistory> corpus, const ModelTrainOptions& options) {
  if (corpus.empty()) throw ValidationError("cannot train the model on an empty corpus");
  if (options.batch_size == 0) throw ValidationError("batch_size must be positive");

  std::vector<SequenceExample> all;
  std::vector<std::size_t> multi;  // indices with >= 2 semesters
  for (const auto& h : corpus) {
    SequenceExample ex = make_example(h, vocab);
    const bool has_known = std::any_of(ex.tokens.begin(), ex.tokens.end(),
                                       [](std::size_t t) { return t >= Vocabulary::kNumSpecialTokens; });
    if (!has_known) continue;
    if (h.semesters.size() >= 2) multi.push_back(all.size());
    all.push_back(std::move(ex));
  }
  if (all.empty()) throw ValidationError("corpus has no courses from the model vocabulary");

  std::mt19937_64 rng(options.seed);
  AdamState adam{ModelParams::zeros_like(params), ModelParams::zeros_like(params), 0};
  ModelParams grad;
  ModelTrainReport report;

  auto run_epoch = [&](std::vector<std::size_t> order, bool pretrain) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t batches = 0;
    std::vector<MaskedBatch> batch;
    for (std::size_t b = 0; b < order.size(); b += options.batch_size) {
      batch.clear();
      const std::size_t e = std::min(order.size(), b + options.batch_size);
      for (std::size_t k = b; k < e; ++k) {
        const auto& ex = all[order[k]];
        if (pretrain) {
          batch.push_back(mask_sampling(ex, options.mask_rate, rng));
        } else {
          try {
            batch.push_back(mask_latest_semester(ex));
            if (options.context_dropout > 0.0) {
              // Hide random context courses; they are not prediction targets.
              std::bernoulli_distribution drop(options.context_dropout);
              auto& b = batch.back();
              const std::size_t first_masked = b.masked.front();
              for (std::size_t i = 0; i < first_masked; ++i) {
                if (drop(rng)) b.input.tokens[i] = Vocabulary::kMaskToken;
              }
            }
          } catch (const ValidationError&) {
            // Final semester made only of unknown courses.
          }
        }
      }
      if (batch.empty()) continue;
      sum += masked_loss(params, batch, &grad, options.label_smoothing);
      ++batches;
      adam_update(params, grad, adam, options.learning_rate, options.weight_decay);
    }
    return batches ? sum / static_cast<double>(batches) : 0.0;
  };

  std::vector<std::size_t> every(all.size());
  std::iota(every.begin(), every.end(), 0);
  for (int e = 0; e < options.pretrain_epochs; ++e) report.pretrain_loss.push_back(run_epoch(every, true));
  if (!multi.empty()) {
    for (int e = 0; e < options.finetune_epochs; ++e) report.finetune_loss.push_back(run_epoch(multi, false));
  }
  return report;
}

double heldout_loss(const ModelParams& params, const Vocabulary& vocab,
                    std::span<const EnrollmentHistory> histories) {
  std::vector<MaskedBatch> batches;
  for (const auto& h : histories) {
    if (h.semesters.size() < 2) continue;
    try {
      batches.push_back(mask_latest_semester(make_example(h, vocab)));
    } catch (const ValidationError&) {
    }
  }
  if (batches.empty()) throw ValidationError("no held-out histories with two or more semesters");
  return masked_loss(params, batches);
}

// ---------------------------------------------------------------------------
// Checkpoint

json TrainedModel::to_json() const {
  json groups = json::object();
  params.for_each([&](std::string_view name, const Matrix& m) { groups[std::string(name)] = matrix_to_json(m); });
  const auto& c = params.config;
  return json{{"format", "skillrec-model"},
              {"version", kModelFormatVersion},
              {"config",
               {{"d_model", c.d_model},
                {"ffn_dim", c.ffn_dim},
                {"max_positions", c.max_positions},
                {"init_scale", c.init_scale},
                {"seed", c.seed},
                {"heads", c.heads},
                {"tie_output", c.tie_output}}},
              {"vocabulary", {{"courses", vocab.courses()}, {"majors", vocab.majors()}}},
              {"params", std::move(groups)}};
}

TrainedModel TrainedModel::from_json(const json& j) {
  try {
    if (j.value("format", std::string{}) != "skillrec-model") throw ValidationError("not a model checkpoint");
    if (j.at("version").get<int>() != kModelFormatVersion) throw ValidationError("unsupported model version");
    TrainedModel tm;
    tm.vocab = Vocabulary(j.at("vocabulary").at("courses").get<std::vector<std::string>>(),
                          j.at("vocabulary").at("majors").get<std::vector<std::string>>());
    const auto& c = j.at("config");
    ModelConfig cfg;
    cfg.d_model = c.at("d_model").get<std::size_t>();
    cfg.ffn_dim = c.at("ffn_dim").get<std::size_t>();
    cfg.max_positions = c.at("max_positions").get<std::size_t>();
    cfg.init_scale = c.at("init_scale").get<double>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    cfg.heads = c.at("heads").get<std::size_t>();
    cfg.tie_output = c.at("tie_output").get<bool>();
    tm.params = ModelParams::init(cfg, tm.vocab);
    const auto& groups = j.at("params");
    tm.params.for_each([&](std::string_view name, Matrix& m) {
      Matrix loaded = matrix_from_json(groups.at(std::string(name)));
      if (loaded.rows() != m.rows() || loaded.cols() != m.cols())
        throw ValidationError("parameter group " + std::string(name) + " has the wrong shape");
      m = std::move(loaded);
    });
    return tm;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed model checkpoint: ") + e.what());
  }
}

void TrainedModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write model: " + path.string());
  out << to_json().dump() << '\n';
}

TrainedModel TrainedModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open model: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 1, e.what());
  }
  return from_json(j);
}

std::vector<double> TrainedModel::next_semester_distribution(const std::vector<Semester>& semesters,
                                                             const std::vector<std::string>& major) const {
  EnrollmentHistory h{"", semesters, major};
  MaskedBatch batch;
  batch.input = make_example(h, vocab);
  batch.input.tokens.push_back(Vocabulary::kMaskToken);
  batch.input.positions.push_back(semesters.size());
  batch.masked = {batch.input.size() - 1};
  batch.targets = {0};
  const Matrix logits = model_forward(params, batch).logits;
  const double hi = logits.row(0).maxCoeff();
  Eigen::RowVectorXd p = (logits.row(0).array() - hi).exp().matrix();
  p /= p.sum();
  return std::vector<double>(p.data(), p.data() + p.size());
}

}  // namespace skillrec
