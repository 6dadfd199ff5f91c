#include "skillrec/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "skillrec/error.hpp"

namespace skillrec {

namespace {

double log_sum_exp(std::span<const double> xs) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : xs) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - hi);
  return hi + std::log(sum);
}

using Lattice = std::vector<LabelScores>;

Lattice forward_lattice(const EmissionMatrix& e, const TransitionMatrix& tr) {
  const std::size_t n = e.size();
  Lattice alpha(n);
  for (std::size_t j = 0; j < kNumLabels; ++j) alpha[0][j] = tr.start[j] + e.rows[0][j];
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      std::array<double, kNumLabels> terms;
      for (std::size_t i = 0; i < kNumLabels; ++i) terms[i] = alpha[t - 1][i] + tr.scores[i][j];
      alpha[t][j] = log_sum_exp(terms) + e.rows[t][j];
    }
  }
  return alpha;
}

Lattice backward_lattice(const EmissionMatrix& e, const TransitionMatrix& tr) {
  const std::size_t n = e.size();
  Lattice beta(n);
  for (std::size_t i = 0; i < kNumLabels; ++i) beta[n - 1][i] = tr.stop[i];
  for (std::size_t t = n - 1; t-- > 0;) {
    for (std::size_t i = 0; i < kNumLabels; ++i) {
      std::array<double, kNumLabels> terms;
      for (std::size_t j = 0; j < kNumLabels; ++j)
        terms[j] = tr.scores[i][j] + e.rows[t + 1][j] + beta[t + 1][j];
      beta[t][i] = log_sum_exp(terms);
    }
  }
  return beta;
}

double finish(const Lattice& alpha, const TransitionMatrix& tr) {
  std::array<double, kNumLabels> terms;
  for (std::size_t j = 0; j < kNumLabels; ++j) terms[j] = alpha.back()[j] + tr.stop[j];
  return log_sum_exp(terms);
}

void check_gold(const EmissionMatrix& e, std::span<const Label> gold) {
  if (gold.size() != e.size()) {
    throw ValidationError("gold path length " + std::to_string(gold.size()) +
                          " does not match token count " + std::to_string(e.size()));
  }
  if (!path_is_valid(gold)) throw ValidationError("gold path contains forbidden O -> I-CON transition");
}

}  // namespace

std::string_view label_name(Label l) {
  switch (l) {
    case Label::kO: return "O";
    case Label::kBegin: return "B-CON";
    case Label::kInside: return "I-CON";
  }
  return "O";
}

Label label_from_name(std::string_view name) {
  if (name == "O") return Label::kO;
  if (name == "B-CON" || name == "B") return Label::kBegin;
  if (name == "I-CON" || name == "I") return Label::kInside;
  throw ValidationError("unknown label: " + std::string(name));
}

std::array<double, TransitionMatrix::kNumParams> TransitionMatrix::flatten() const {
  std::array<double, kNumParams> flat{};
  std::size_t k = 0;
  for (const auto& row : scores)
    for (double v : row) flat[k++] = v;
  for (double v : start) flat[k++] = v;
  for (double v : stop) flat[k++] = v;
  return flat;
}

TransitionMatrix TransitionMatrix::unflatten(std::span<const double> flat) {
  if (flat.size() != kNumParams) throw ValidationError("transition parameter vector has wrong size");
  TransitionMatrix t;
  std::size_t k = 0;
  for (auto& row : t.scores)
    for (double& v : row) v = flat[k++];
  for (double& v : t.start) v = flat[k++];
  for (double& v : t.stop) v = flat[k++];
  return t;
}

bool path_is_valid(std::span<const Label> path) {
  for (std::size_t t = 1; t < path.size(); ++t) {
    if (TransitionMatrix::is_forbidden(path[t - 1], path[t])) return false;
  }
  return true;
}

LabelPath viterbi_decode(const EmissionMatrix& e, const TransitionMatrix& tr) {
  const std::size_t n = e.size();
  if (n == 0) return {};
  std::vector<LabelScores> best(n);
  std::vector<std::array<std::size_t, kNumLabels>> back(n);
  for (std::size_t j = 0; j < kNumLabels; ++j) best[0][j] = tr.start[j] + e.rows[0][j];
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      std::size_t arg = 0;
      double top = best[t - 1][0] + tr.scores[0][j];
      for (std::size_t i = 1; i < kNumLabels; ++i) {
        const double cand = best[t - 1][i] + tr.scores[i][j];
        if (cand > top) {
          top = cand;
          arg = i;
        }
      }
      best[t][j] = top + e.rows[t][j];
      back[t][j] = arg;
    }
  }
  std::size_t last = 0;
  double top = best[n - 1][0] + tr.stop[0];
  for (std::size_t j = 1; j < kNumLabels; ++j) {
    const double cand = best[n - 1][j] + tr.stop[j];
    if (cand > top) {
      top = cand;
      last = j;
    }
  }
  LabelPath path(n);
  path[n - 1] = static_cast<Label>(last);
  for (std::size_t t = n - 1; t > 0; --t) {
    last = back[t][last];
    path[t - 1] = static_cast<Label>(last);
  }
  return path;
}

double path_score(const EmissionMatrix& e, const TransitionMatrix& tr, std::span<const Label> path) {
  if (path.empty()) return 0.0;
  double s = tr.start[index(path.front())] + tr.stop[index(path.back())];
  for (std::size_t t = 0; t < path.size(); ++t) {
    s += e(t, path[t]);
    if (t > 0) s += tr(path[t - 1], path[t]);
  }
  return s;
}

double log_partition(const EmissionMatrix& e, const TransitionMatrix& tr) {
  if (e.size() == 0) return 0.0;
  return finish(forward_lattice(e, tr), tr);
}

double crf_log_likelihood(const EmissionMatrix& e, const TransitionMatrix& tr,
                          std::span<const Label> gold) {
  check_gold(e, gold);
  if (gold.empty()) return 0.0;
  return std::min(0.0, path_score(e, tr, gold) - log_partition(e, tr));
}

CrfGradient crf_nll_gradient(const EmissionMatrix& e, const TransitionMatrix& tr,
                             std::span<const Label> gold) {
  check_gold(e, gold);
  CrfGradient g;
  g.transitions.scores[index(Label::kO)][index(Label::kInside)] = 0.0;
  const std::size_t n = e.size();
  g.emissions.assign(n, LabelScores{});
  if (n == 0) return g;

  const Lattice alpha = forward_lattice(e, tr);
  const Lattice beta = backward_lattice(e, tr);
  const double log_z = finish(alpha, tr);
  g.nll = log_z - path_score(e, tr, gold);

  // Expected counts under the model minus observed counts.
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      g.emissions[t][j] = std::exp(alpha[t][j] + beta[t][j] - log_z);
    }
  }
  for (std::size_t j = 0; j < kNumLabels; ++j) {
    g.transitions.start[j] = g.emissions[0][j];
    g.transitions.stop[j] = g.emissions[n - 1][j];
  }
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t i = 0; i < kNumLabels; ++i) {
      for (std::size_t j = 0; j < kNumLabels; ++j) {
        g.transitions.scores[i][j] +=
            std::exp(alpha[t - 1][i] + tr.scores[i][j] + e.rows[t][j] + beta[t][j] - log_z);
      }
    }
  }

  g.transitions.start[index(gold.front())] -= 1.0;
  g.transitions.stop[index(gold.back())] -= 1.0;
  for (std::size_t t = 0; t < n; ++t) {
    g.emissions[t][index(gold[t])] -= 1.0;
    if (t > 0) g.transitions.scores[index(gold[t - 1])][index(gold[t])] -= 1.0;
  }
  return g;
}

}  // namespace skillrec
