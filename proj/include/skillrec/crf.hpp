#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace skillrec {

// Label order is fixed; it indexes every emission and transition matrix.
enum class Label : std::size_t { kO = 0, kBegin = 1, kInside = 2 };
inline constexpr std::size_t kNumLabels = 3;
inline constexpr std::array<Label, kNumLabels> kAllLabels{Label::kO, Label::kBegin, Label::kInside};

constexpr std::size_t index(Label l) { return static_cast<std::size_t>(l); }
std::string_view label_name(Label l);  // "O", "B-CON", "I-CON"
Label label_from_name(std::string_view name);

using LabelPath = std::vector<Label>;
using LabelScores = std::array<double, kNumLabels>;

// Stand-in for -inf on the O -> I-CON edge. Large enough that no path using it
// can win against realistic scores, small enough to keep arithmetic finite.
inline constexpr double kForbiddenScore = -1e4;

/// Unnormalized per-token log-potentials, one row per token.
struct EmissionMatrix {
  std::vector<LabelScores> rows;

  std::size_t size() const { return rows.size(); }
  double operator()(std::size_t t, Label l) const { return rows[t][index(l)]; }
  double& operator()(std::size_t t, Label l) { return rows[t][index(l)]; }
};

/// Edge log-potentials. scores[i][j] scores label j following label i.
struct TransitionMatrix {
  std::array<LabelScores, kNumLabels> scores{};
  LabelScores start{};
  LabelScores stop{};

  TransitionMatrix() { scores[index(Label::kO)][index(Label::kInside)] = kForbiddenScore; }

  double operator()(Label from, Label to) const { return scores[index(from)][index(to)]; }
  double& operator()(Label from, Label to) { return scores[index(from)][index(to)]; }

  static bool is_forbidden(Label from, Label to) {
    return from == Label::kO && to == Label::kInside;
  }

  // Flat parameter view: 9 edge entries row-major, then start, then stop.
  static constexpr std::size_t kNumParams = kNumLabels * kNumLabels + 2 * kNumLabels;
  std::array<double, kNumParams> flatten() const;
  static TransitionMatrix unflatten(std::span<const double> flat);

  friend bool operator==(const TransitionMatrix&, const TransitionMatrix&) = default;
};

/// Highest-scoring label path. Ties go to the lowest label index.
LabelPath viterbi_decode(const EmissionMatrix& emissions, const TransitionMatrix& transitions);

/// Unnormalized score of one path: emissions + transitions + start + stop.
double path_score(const EmissionMatrix& emissions, const TransitionMatrix& transitions,
                  std::span<const Label> path);

/// log Z via the forward algorithm in log space.
double log_partition(const EmissionMatrix& emissions, const TransitionMatrix& transitions);

/// score(gold) - log Z. Throws ValidationError if gold uses the forbidden edge
/// or its length differs from the emissions.
double crf_log_likelihood(const EmissionMatrix& emissions, const TransitionMatrix& transitions,
                          std::span<const Label> gold);

/// Gradient of the negative log-likelihood of one sequence.
struct CrfGradient {
  double nll = 0.0;
  TransitionMatrix transitions;            // d nll / d transition entries
  std::vector<LabelScores> emissions;      // d nll / d emission entries
};

CrfGradient crf_nll_gradient(const EmissionMatrix& emissions, const TransitionMatrix& transitions,
                             std::span<const Label> gold);

bool path_is_valid(std::span<const Label> path);

}  // namespace skillrec
