// Shared fixtures and independent oracles for the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "skillrec/catalog.hpp"
#include "skillrec/crf.hpp"
#include "skillrec/embeddings.hpp"
#include "skillrec/error.hpp"
#include "skillrec/explainer.hpp"
#include "skillrec/scoring.hpp"

namespace skillrec::testing {

class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("skillrec-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Course make_course(std::string id, std::string dept, std::string description,
                          std::vector<std::string> skills = {}) {
  Course c;
  c.id = std::move(id);
  c.title = c.id;
  c.department = std::move(dept);
  c.description = std::move(description);
  c.recommendable = is_recommendable(c.description);
  for (auto& s : skills) c.skills.push_back({std::move(s), 0, 0, 1});
  return c;
}

// ---------------------------------------------------------------------------
// CRF oracles

inline EmissionMatrix random_emissions(std::mt19937_64& rng, std::size_t n, double scale = 2.0) {
  std::normal_distribution<double> nd(0.0, scale);
  EmissionMatrix e;
  e.rows.resize(n);
  for (auto& row : e.rows)
    for (double& x : row) x = nd(rng);
  return e;
}

inline TransitionMatrix random_transitions(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  TransitionMatrix t;
  for (Label a : kAllLabels)
    for (Label b : kAllLabels)
      if (!TransitionMatrix::is_forbidden(a, b)) t(a, b) = nd(rng);
  for (double& x : t.start) x = nd(rng);
  for (double& x : t.stop) x = nd(rng);
  return t;
}

// Every label sequence of length n, in lexicographic label-index order.
inline std::vector<LabelPath> all_paths(std::size_t n) {
  std::vector<LabelPath> out;
  LabelPath p(n, Label::kO);
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= kNumLabels;
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t i = n; i-- > 0;) {
      p[i] = static_cast<Label>(c % kNumLabels);
      c /= kNumLabels;
    }
    out.push_back(p);
  }
  return out;
}

// Direct score sum, written independently of the library's path_score.
inline double oracle_score(const EmissionMatrix& e, const TransitionMatrix& t, const LabelPath& p) {
  if (p.empty()) return 0.0;
  double s = t.start[index(p[0])] + t.stop[index(p.back())];
  for (std::size_t i = 0; i < p.size(); ++i) {
    s += e.rows[i][index(p[i])];
    if (i > 0) s += t.scores[index(p[i - 1])][index(p[i])];
  }
  return s;
}

// Exhaustive argmax over valid paths; the first maximum in enumeration order
// wins, which is the lowest-index tie-break.
inline LabelPath oracle_viterbi(const EmissionMatrix& e, const TransitionMatrix& t) {
  LabelPath best;
  double best_score = -INFINITY;
  for (const auto& p : all_paths(e.size())) {
    const double s = oracle_score(e, t, p);
    if (s > best_score) {
      best_score = s;
      best = p;
    }
  }
  return best;
}

inline bool oracle_valid(const LabelPath& p) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == Label::kInside && i > 0 && p[i - 1] == Label::kO) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Explanation oracles

class TableStore final : public EmbeddingStore {
 public:
  explicit TableStore(std::unordered_map<std::string, EmbeddingVector> t) : table_(std::move(t)) {
    dim_ = table_.empty() ? 0 : table_.begin()->second.dim();
  }
  EmbeddingVector embed(std::string_view text) const override {
    auto it = table_.find(std::string(text));
    if (it == table_.end()) throw NotFoundError("unknown key: " + std::string(text));
    return it->second;
  }
  std::size_t dim() const override { return dim_; }
  std::string provider_id() const override { return "table"; }

 private:
  std::unordered_map<std::string, EmbeddingVector> table_;
  std::size_t dim_ = 0;
};

inline double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Pairwise thresholding over every (target, taken) pair.
inline std::pair<std::set<std::string>, std::set<std::string>> oracle_partition(
    const std::vector<std::string>& target, const std::vector<std::string>& taken,
    const std::unordered_map<std::string, std::vector<double>>& vectors, double threshold) {
  std::set<std::string> learned, fresh;
  for (const auto& s : target) {
    bool hit = false;
    for (const auto& c : taken) {
      if (s == c || oracle_cosine(vectors.at(s), vectors.at(c)) > threshold) hit = true;
    }
    (hit ? learned : fresh).insert(s);
  }
  return {learned, fresh};
}

// ---------------------------------------------------------------------------
// Diversification oracle: best course per department, then the k departments
// whose best course scores highest.

inline std::vector<std::string> oracle_diversify(const std::vector<ScoredCourse>& scored, std::size_t k) {
  std::map<std::string, const ScoredCourse*> best;
  for (const auto& s : scored) {
    auto& slot = best[s.department];
    if (!slot || s.score > slot->score || (s.score == slot->score && s.course_id < slot->course_id)) slot = &s;
  }
  std::vector<const ScoredCourse*> heads;
  for (const auto& [d, s] : best) heads.push_back(s);
  std::sort(heads.begin(), heads.end(), [](const ScoredCourse* a, const ScoredCourse* b) {
    if (a->score != b->score) return a->score > b->score;
    return a->course_id < b->course_id;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < heads.size() && i < k; ++i) out.push_back(heads[i]->course_id);
  return out;
}

// Relative comparison used by the finite-difference checks.
inline bool close_rel(double a, double b, double tol, double abs_floor = 1e-9) {
  const double diff = std::abs(a - b);
  return diff < abs_floor || diff <= tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace skillrec::testing
