#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"
#include "skillrec/embeddings.hpp"
#include "skillrec/model.hpp"
#include "skillrec/tagger.hpp"

namespace skillrec {

struct EmbeddingConfig {
  std::string provider = "hashed";  // hashed | file | remote
  std::size_t dim = kDefaultEmbeddingDim;
  std::filesystem::path path;       // file provider
  std::string url;                  // remote provider
  std::filesystem::path cache_path; // remote provider
  int timeout_ms = 5000;
};

struct Config {
  ModelConfig model;
  ModelTrainOptions training;
  CrfTrainOptions tagger;
  std::size_t k = 5;
  double threshold = 0.85;
  std::size_t explanation_size = 7;
  int port = 8080;
  std::filesystem::path data_dir = "data";
  std::filesystem::path static_dir;
  std::size_t feedback_compact_every = 256;
  EmbeddingConfig embedding;
};

/// Unknown keys are rejected so typos surface as errors.
Config config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Config& c);
Config load_config(const std::filesystem::path& path);

/// Reads `explicit_path`, else $SKILLREC_CONFIG, else defaults; then applies
/// SKILLREC_PORT, SKILLREC_DATA_DIR and SKILLREC_EMBED_URL.
Config resolve_config(const std::optional<std::filesystem::path>& explicit_path);

std::shared_ptr<const EmbeddingStore> make_embedding_store(const EmbeddingConfig& c);

}  // namespace skillrec
