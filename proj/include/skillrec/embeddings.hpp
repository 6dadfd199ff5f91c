#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace skillrec {

inline constexpr std::size_t kDefaultEmbeddingDim = 768;

class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values);

  const std::vector<double>& values() const { return values_; }
  std::size_t dim() const { return values_.size(); }
  double norm() const { return norm_; }

  friend bool operator==(const EmbeddingVector& a, const EmbeddingVector& b) {
    return a.values_ == b.values_;
  }

 private:
  std::vector<double> values_;
  double norm_ = 0.0;
};

/// dot(a, b) / (|a| |b|). Throws on dimension mismatch or a zero vector.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Text -> vector lookup. Implementations are safe for concurrent embed().
class EmbeddingStore {
 public:
  virtual ~EmbeddingStore() = default;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string provider_id() const = 0;
};

/// Exact-key lookups from a "key<TAB>v1 v2 ... vd" file.
class FileEmbeddingStore final : public EmbeddingStore {
 public:
  explicit FileEmbeddingStore(std::unordered_map<std::string, EmbeddingVector> table);
  static FileEmbeddingStore load(const std::filesystem::path& path);

  EmbeddingVector embed(std::string_view text) const override;
  std::size_t dim() const override { return dim_; }
  std::string provider_id() const override { return "file"; }
  std::size_t size() const { return table_.size(); }

 private:
  std::unordered_map<std::string, EmbeddingVector> table_;
  std::size_t dim_ = 0;
};

/// Lowercased character 3-grams (text padded with '#') hashed into dim
/// buckets, L2-normalized.
class HashedNgramStore final : public EmbeddingStore {
 public:
  explicit HashedNgramStore(std::size_t dim = kDefaultEmbeddingDim);

  EmbeddingVector embed(std::string_view text) const override;
  std::size_t dim() const override { return dim_; }
  std::string provider_id() const override { return "hashed-ngram-" + std::to_string(dim_); }

 private:
  std::size_t dim_;
};

/// Remote encoder behind POST /embed {texts:[...]} -> {vectors:[[...]]}.
/// Every fetched vector is appended to a disk cache keyed by
/// (provider id, text hash), so repeated runs work offline.
class RemoteEmbeddingStore final : public EmbeddingStore {
 public:
  struct Options {
    std::string url;  // e.g. http://localhost:9000
    std::chrono::milliseconds timeout{5000};
    std::filesystem::path cache_path;  // empty = in-memory only
    std::string provider_id = "remote";
  };

  explicit RemoteEmbeddingStore(Options options);

  EmbeddingVector embed(std::string_view text) const override;
  // Fetches every uncached text in one request.
  void prefetch(const std::vector<std::string>& texts) const;
  std::size_t dim() const override;
  std::string provider_id() const override { return options_.provider_id; }
  std::size_t cached() const;

 private:
  std::string cache_key(std::string_view text) const;
  std::vector<EmbeddingVector> fetch(const std::vector<std::string>& texts) const;
  void remember(const std::string& key, const EmbeddingVector& v) const;

  Options options_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, EmbeddingVector> cache_;
  mutable std::size_t dim_ = 0;
};

/// Memoizes another store. Useful in front of hashed or remote providers when
/// the same skills are embedded many times.
class CachedEmbeddingStore final : public EmbeddingStore {
 public:
  explicit CachedEmbeddingStore(std::shared_ptr<const EmbeddingStore> inner);

  EmbeddingVector embed(std::string_view text) const override;
  std::size_t dim() const override { return inner_->dim(); }
  std::string provider_id() const override { return inner_->provider_id(); }

 private:
  std::shared_ptr<const EmbeddingStore> inner_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, EmbeddingVector> memo_;
};

void save_embedding_file(const std::unordered_map<std::string, EmbeddingVector>& table,
                         const std::filesystem::path& path);

}  // namespace skillrec
