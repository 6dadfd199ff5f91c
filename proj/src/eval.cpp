#include "skillrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "skillrec/error.hpp"

namespace skillrec {

using nlohmann::json;

double f1_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

MetricsReport span_prf(const SpanSets& gold, const SpanSets& predicted, Averaging mode) {
  if (gold.size() != predicted.size() ||
      !std::equal(gold.begin(), gold.end(), predicted.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; })) {
    throw ValidationError("gold and predicted span sets cover different courses");
  }
  MetricsReport r;
  r.courses = gold.size();
  double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
  for (const auto& [id, g] : gold) {
    const auto& p = predicted.at(id);
    std::size_t tp = 0;
    for (const auto& span : p) tp += g.count(span);
    const std::size_t fp = p.size() - tp;
    const std::size_t fn = g.size() - tp;
    r.true_positives += tp;
    r.false_positives += fp;
    r.false_negatives += fn;
    if (g.empty() && p.empty()) {
      p_sum += 1.0;
      r_sum += 1.0;
      f_sum += 1.0;
      continue;
    }
    const double cp = p.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(p.size());
    const double cr = g.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(g.size());
    p_sum += cp;
    r_sum += cr;
    f_sum += f1_score(cp, cr);
  }
  if (mode == Averaging::kMacro) {
    if (r.courses == 0) return r;
    const auto n = static_cast<double>(r.courses);
    r.precision = p_sum / n;
    r.recall = r_sum / n;
    r.f1 = f_sum / n;
    return r;
  }
  const std::size_t pred = r.true_positives + r.false_positives;
  const std::size_t act = r.true_positives + r.false_negatives;
  if (pred == 0 && act == 0) {
    r.precision = r.recall = r.f1 = r.courses ? 1.0 : 0.0;
    return r;
  }
  r.precision = pred ? static_cast<double>(r.true_positives) / static_cast<double>(pred) : 0.0;
  r.recall = act ? static_cast<double>(r.true_positives) / static_cast<double>(act) : 0.0;
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

double proportional_agreement(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ValidationError("rating lists have different lengths");
  if (a.empty()) throw ValidationError("rating lists are empty");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) agree += a[i] == b[i];
  return static_cast<double>(agree) / static_cast<double>(a.size());
}

double cohen_kappa(std::span<const int> a, std::span<const int> b) {
  const double p_o = proportional_agreement(a, b);
  std::map<int, std::pair<std::size_t, std::size_t>> marginals;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++marginals[a[i]].first;
    ++marginals[b[i]].second;
  }
  const auto n = static_cast<double>(a.size());
  double p_e = 0.0;
  for (const auto& [label, counts] : marginals) p_e += (counts.first / n) * (counts.second / n);
  if (std::abs(1.0 - p_e) < 1e-15) {
    if (p_o == 1.0) return 1.0;
    throw ValidationError("kappa undefined: chance agreement is 1 but observed agreement is not");
  }
  return (p_o - p_e) / (1.0 - p_e);
}

double recall_at_k(const CourseScorer& scorer, std::span<const EnrollmentHistory> histories,
                   const Catalog& catalog, std::size_t k, bool diversified) {
  if (k == 0) throw ValidationError("k must be positive");
  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& h : histories) {
    if (h.semesters.size() < 2) continue;
    EnrollmentHistory context = h;
    const Semester actual = context.semesters.back();
    context.semesters.pop_back();
    const auto scored = score_candidates(scorer, context, catalog);
    std::vector<std::string> top;
    if (diversified) {
      for (const auto& e : diversify(scored, k).entries) top.push_back(e.course_id);
    } else {
      for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) top.push_back(scored[i].course_id);
    }
    const std::unordered_set<std::string> truth(actual.begin(), actual.end());
    std::size_t hits = 0;
    for (const auto& id : top) hits += truth.count(id);
    sum += static_cast<double>(hits) / static_cast<double>(std::min(k, truth.size()));
    ++counted;
  }
  return counted ? sum / static_cast<double>(counted) : 0.0;
}

MonteCarloInterval random_recall_interval(std::span<const EnrollmentHistory> histories, const Catalog& catalog,
                                          std::size_t k, std::size_t trials, double coverage,
                                          std::uint64_t seed, bool diversified) {
  if (trials == 0) throw ValidationError("need at least one Monte Carlo trial");
  RandomScorer scorer(catalog.size(), seed);
  std::vector<double> means(trials);
  for (auto& m : means) m = recall_at_k(scorer, histories, catalog, k, diversified);
  std::sort(means.begin(), means.end());
  MonteCarloInterval ci;
  ci.trials = trials;
  double s = 0.0;
  for (double m : means) s += m;
  ci.mean = s / static_cast<double>(trials);
  const double tail = (1.0 - coverage) / 2.0;
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(trials - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, trials - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  ci.lower = quantile(tail);
  ci.upper = quantile(1.0 - tail);
  return ci;
}

HistorySplit split_histories(std::vector<EnrollmentHistory> histories, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw ValidationError("test fraction must be in [0, 1]");
  std::mt19937_64 rng(seed);
  std::shuffle(histories.begin(), histories.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(histories.size())));
  HistorySplit split;
  split.test.assign(std::make_move_iterator(histories.begin()),
                    std::make_move_iterator(histories.begin() + static_cast<std::ptrdiff_t>(n_test)));
  split.train.assign(std::make_move_iterator(histories.begin() + static_cast<std::ptrdiff_t>(n_test)),
                     std::make_move_iterator(histories.end()));
  return split;
}

json to_json(const MetricsReport& m) {
  return json{{"precision", m.precision},         {"recall", m.recall},
              {"f1", m.f1},                       {"true_positives", m.true_positives},
              {"false_positives", m.false_positives}, {"false_negatives", m.false_negatives},
              {"courses", m.courses}};
}

std::string to_text(const MetricsReport& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%-10s %10s %10s %10s\n%-10s %10.4f %10.4f %10.4f\n%-10s %10zu %10zu %10zu\n",
                "", "precision", "recall", "f1", "score", m.precision, m.recall, m.f1, "tp/fp/fn",
                m.true_positives, m.false_positives, m.false_negatives);
  return buf;
}

}  // namespace skillrec
