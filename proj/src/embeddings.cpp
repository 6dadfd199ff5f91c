#include "skillrec/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "skillrec/error.hpp"
#include "skillrec/hash.hpp"
#include "skillrec/text.hpp"

namespace skillrec {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string require_text(std::string_view text) {
  std::string t = trim(text);
  if (t.empty()) throw ValidationError("cannot embed empty text");
  return t;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<double> parse_values(std::string_view s, const std::string& source, std::size_t line) {
  std::vector<double> values;
  std::istringstream in{std::string(s)};
  in.imbue(std::locale::classic());
  double v;
  while (in >> v) values.push_back(v);
  if (!in.eof()) throw ParseError(source, line, "non-numeric vector component");
  return values;
}

void append_line(std::ostream& out, const std::string& key, const EmbeddingVector& v) {
  out << key << '\t';
  char buf[32];
  for (std::size_t i = 0; i < v.dim(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v.values()[i]);
    if (i) out << ' ';
    out << buf;
  }
  out << '\n';
}

}  // namespace

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  double s = 0.0;
  for (double v : values_) s += v * v;
  norm_ = std::sqrt(s);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw ValidationError("cosine of vectors with different dimensions (" + std::to_string(a.dim()) +
                          " vs " + std::to_string(b.dim()) + ")");
  }
  if (a.norm() == 0.0 || b.norm() == 0.0) throw ValidationError("cosine undefined for a zero vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += a.values()[i] * b.values()[i];
  return std::clamp(dot / (a.norm() * b.norm()), -1.0, 1.0);
}

// ---------------------------------------------------------------------------

FileEmbeddingStore::FileEmbeddingStore(std::unordered_map<std::string, EmbeddingVector> table)
    : table_(std::move(table)) {
  for (const auto& [key, v] : table_) {
    if (dim_ == 0) dim_ = v.dim();
    if (v.dim() != dim_) throw ValidationError("embedding for '" + key + "' has inconsistent dimension");
  }
}

FileEmbeddingStore FileEmbeddingStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open embedding file: " + path.string());
  std::unordered_map<std::string, EmbeddingVector> table;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string(), line_no, "missing TAB separator");
    auto values = parse_values(std::string_view(line).substr(tab + 1), path.string(), line_no);
    if (values.empty()) throw ParseError(path.string(), line_no, "empty vector");
    if (dim == 0) dim = values.size();
    if (values.size() != dim)
      throw ParseError(path.string(), line_no, "expected " + std::to_string(dim) + " components");
    table.insert_or_assign(line.substr(0, tab), EmbeddingVector(std::move(values)));
  }
  return FileEmbeddingStore(std::move(table));
}

EmbeddingVector FileEmbeddingStore::embed(std::string_view text) const {
  const std::string key = require_text(text);
  auto it = table_.find(key);
  if (it == table_.end()) throw NotFoundError("unknown key: " + key);
  return it->second;
}

void save_embedding_file(const std::unordered_map<std::string, EmbeddingVector>& table,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write embedding file: " + path.string());
  std::map<std::string, const EmbeddingVector*> sorted;
  for (const auto& [k, v] : table) sorted.emplace(k, &v);
  for (const auto& [k, v] : sorted) append_line(out, k, *v);
}

// ---------------------------------------------------------------------------

HashedNgramStore::HashedNgramStore(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw ValidationError("embedding dimension must be positive");
}

EmbeddingVector HashedNgramStore::embed(std::string_view text) const {
  const std::string padded = "#" + to_lower_ascii(require_text(text)) + "#";
  std::vector<double> v(dim_, 0.0);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    v[fnv1a64(std::string_view(padded).substr(i, 3)) % dim_] += 1.0;
  }
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return EmbeddingVector(std::move(v));
}

// ---------------------------------------------------------------------------

RemoteEmbeddingStore::RemoteEmbeddingStore(Options options) : options_(std::move(options)) {
  if (options_.url.empty()) throw ValidationError("remote embedding provider needs a URL");
  if (options_.cache_path.empty()) return;
  std::ifstream in(options_.cache_path, std::ios::binary);
  if (!in) return;
  const std::string prefix = options_.provider_id + ":";
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    // The cache file may be shared by several providers.
    if (line.compare(0, prefix.size(), prefix) != 0) continue;
    auto values = parse_values(std::string_view(line).substr(tab + 1), options_.cache_path.string(), line_no);
    if (values.empty()) continue;
    dim_ = values.size();
    cache_.insert_or_assign(line.substr(0, tab), EmbeddingVector(std::move(values)));
  }
}

std::string RemoteEmbeddingStore::cache_key(std::string_view text) const {
  return options_.provider_id + ":" + hex64(fnv1a64(text));
}

std::size_t RemoteEmbeddingStore::dim() const {
  std::lock_guard lock(mutex_);
  return dim_;
}

std::size_t RemoteEmbeddingStore::cached() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

std::vector<EmbeddingVector> RemoteEmbeddingStore::fetch(const std::vector<std::string>& texts) const {
  httplib::Client client(options_.url);
  const auto secs = options_.timeout.count() / 1000;
  const auto usecs = (options_.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  const json body{{"texts", texts}};
  auto res = client.Post("/embed", body.dump(), "application/json");
  if (!res) {
    throw RetryableError("embedding service unreachable at " + options_.url + ": " +
                         httplib::to_string(res.error()));
  }
  if (res->status >= 500) throw RetryableError("embedding service returned " + std::to_string(res->status));
  if (res->status != 200) throw Error("remote", "embedding service returned " + std::to_string(res->status));

  std::vector<EmbeddingVector> out;
  try {
    const json reply = json::parse(res->body);
    for (const auto& v : reply.at("vectors")) out.emplace_back(v.get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw Error("remote", std::string("malformed embedding reply: ") + e.what());
  }
  if (out.size() != texts.size()) throw Error("remote", "embedding reply has wrong vector count");
  return out;
}

void RemoteEmbeddingStore::remember(const std::string& key, const EmbeddingVector& v) const {
  // Caller holds mutex_; this is the single writer for the cache file.
  if (dim_ == 0) dim_ = v.dim();
  if (v.dim() != dim_) throw Error("remote", "embedding service changed dimension");
  if (!cache_.insert_or_assign(key, v).second) return;
  if (options_.cache_path.empty()) return;
  std::ofstream out(options_.cache_path, std::ios::binary | std::ios::app);
  append_line(out, key, v);
}

void RemoteEmbeddingStore::prefetch(const std::vector<std::string>& texts) const {
  std::vector<std::string> missing;
  {
    std::lock_guard lock(mutex_);
    for (const auto& t : texts) {
      const std::string trimmed = require_text(t);
      if (!cache_.count(cache_key(trimmed))) missing.push_back(trimmed);
    }
  }
  if (missing.empty()) return;
  const auto vectors = fetch(missing);
  std::lock_guard lock(mutex_);
  for (std::size_t i = 0; i < missing.size(); ++i) remember(cache_key(missing[i]), vectors[i]);
}

EmbeddingVector RemoteEmbeddingStore::embed(std::string_view text) const {
  const std::string trimmed = require_text(text);
  const std::string key = cache_key(trimmed);
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  auto vectors = fetch({trimmed});
  std::lock_guard lock(mutex_);
  remember(key, vectors.front());
  return cache_.at(key);
}

// ---------------------------------------------------------------------------

CachedEmbeddingStore::CachedEmbeddingStore(std::shared_ptr<const EmbeddingStore> inner)
    : inner_(std::move(inner)) {
  if (!inner_) throw ValidationError("cached store needs an inner store");
}

EmbeddingVector CachedEmbeddingStore::embed(std::string_view text) const {
  const std::string key(text);
  {
    std::lock_guard lock(mutex_);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
  }
  EmbeddingVector v = inner_->embed(text);
  std::lock_guard lock(mutex_);
  return memo_.emplace(key, std::move(v)).first->second;
}

}  // namespace skillrec
