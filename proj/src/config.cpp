#include "skillrec/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "skillrec/error.hpp"

namespace skillrec {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ValidationError("unknown config key: " + where + "." + key);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

void read_path(const json& j, const char* key, std::filesystem::path& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<std::string>();
}

}  // namespace

Config config_from_json(const json& j) {
  Config c;
  try {
    check_keys(j,
               {"d_model", "ffn_dim", "max_positions", "heads", "tie_output", "mask_rate", "weight_decay", "context_dropout", "label_smoothing", "pretrain_epochs", "finetune_epochs", "lr",
                "batch_size", "tagger_epochs", "tagger_lr", "k", "threshold", "explanation_size", "port", "data_dir",
                "static_dir", "feedback_compact_every", "embedding"},
               "config");
    read(j, "d_model", c.model.d_model);
    read(j, "ffn_dim", c.model.ffn_dim);
    read(j, "max_positions", c.model.max_positions);
    read(j, "heads", c.model.heads);
    read(j, "tie_output", c.model.tie_output);
    read(j, "mask_rate", c.training.mask_rate);
    read(j, "weight_decay", c.training.weight_decay);
    read(j, "context_dropout", c.training.context_dropout);
    read(j, "label_smoothing", c.training.label_smoothing);
    read(j, "pretrain_epochs", c.training.pretrain_epochs);
    read(j, "finetune_epochs", c.training.finetune_epochs);
    read(j, "lr", c.training.learning_rate);
    read(j, "batch_size", c.training.batch_size);
    read(j, "tagger_epochs", c.tagger.epochs);
    read(j, "tagger_lr", c.tagger.learning_rate);
    read(j, "k", c.k);
    read(j, "threshold", c.threshold);
    read(j, "explanation_size", c.explanation_size);
    read(j, "port", c.port);
    read_path(j, "data_dir", c.data_dir);
    read_path(j, "static_dir", c.static_dir);
    read(j, "feedback_compact_every", c.feedback_compact_every);
    if (auto it = j.find("embedding"); it != j.end()) {
      check_keys(*it, {"provider", "dim", "path", "url", "cache_path", "timeout_ms"}, "embedding");
      read(*it, "provider", c.embedding.provider);
      read(*it, "dim", c.embedding.dim);
      read_path(*it, "path", c.embedding.path);
      read(*it, "url", c.embedding.url);
      read_path(*it, "cache_path", c.embedding.cache_path);
      read(*it, "timeout_ms", c.embedding.timeout_ms);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad config value: ") + e.what());
  }
  if (c.k == 0) throw ValidationError("k must be positive");
  if (c.port < 0 || c.port > 65535) throw ValidationError("port out of range");
  if (!(c.training.mask_rate > 0.0 && c.training.mask_rate < 1.0)) throw ValidationError("mask_rate must be in (0, 1)");
  if (c.model.d_model == 0 || c.model.ffn_dim == 0) throw ValidationError("model dimensions must be positive");
  if (c.model.heads == 0 || c.model.d_model % c.model.heads != 0) throw ValidationError("heads must divide d_model");
  if (c.training.weight_decay < 0.0) throw ValidationError("weight_decay must be non-negative");
  if (!(c.training.context_dropout >= 0.0 && c.training.context_dropout < 1.0))
    throw ValidationError("context_dropout must be in [0, 1)");
  if (!(c.training.label_smoothing >= 0.0 && c.training.label_smoothing < 1.0))
    throw ValidationError("label_smoothing must be in [0, 1)");
  return c;
}

json to_json(const Config& c) {
  return json{{"d_model", c.model.d_model},
              {"ffn_dim", c.model.ffn_dim},
              {"max_positions", c.model.max_positions},
              {"heads", c.model.heads},
              {"tie_output", c.model.tie_output},
              {"mask_rate", c.training.mask_rate},
              {"weight_decay", c.training.weight_decay},
              {"context_dropout", c.training.context_dropout},
              {"label_smoothing", c.training.label_smoothing},
              {"pretrain_epochs", c.training.pretrain_epochs},
              {"finetune_epochs", c.training.finetune_epochs},
              {"lr", c.training.learning_rate},
              {"batch_size", c.training.batch_size},
              {"tagger_epochs", c.tagger.epochs},
              {"tagger_lr", c.tagger.learning_rate},
              {"k", c.k},
              {"threshold", c.threshold},
              {"explanation_size", c.explanation_size},
              {"port", c.port},
              {"data_dir", c.data_dir.string()},
              {"static_dir", c.static_dir.string()},
              {"feedback_compact_every", c.feedback_compact_every},
              {"embedding",
               {{"provider", c.embedding.provider},
                {"dim", c.embedding.dim},
                {"path", c.embedding.path.string()},
                {"url", c.embedding.url},
                {"cache_path", c.embedding.cache_path.string()},
                {"timeout_ms", c.embedding.timeout_ms}}}};
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 1, e.what());
  }
  return config_from_json(j);
}

Config resolve_config(const std::optional<std::filesystem::path>& explicit_path) {
  Config c;
  if (explicit_path) {
    c = load_config(*explicit_path);
  } else if (const char* env = std::getenv("SKILLREC_CONFIG"); env && *env) {
    c = load_config(env);
  }
  if (const char* port = std::getenv("SKILLREC_PORT"); port && *port) {
    try {
      c.port = std::stoi(port);
    } catch (const std::exception&) {
      throw ValidationError(std::string("SKILLREC_PORT is not a number: ") + port);
    }
  }
  if (const char* dir = std::getenv("SKILLREC_DATA_DIR"); dir && *dir) c.data_dir = dir;
  if (const char* url = std::getenv("SKILLREC_EMBED_URL"); url && *url) {
    c.embedding.provider = "remote";
    c.embedding.url = url;
  }
  return c;
}

std::shared_ptr<const EmbeddingStore> make_embedding_store(const EmbeddingConfig& c) {
  if (c.provider == "hashed") {
    return std::make_shared<CachedEmbeddingStore>(std::make_shared<HashedNgramStore>(c.dim));
  }
  if (c.provider == "file") return std::make_shared<FileEmbeddingStore>(FileEmbeddingStore::load(c.path));
  if (c.provider == "remote") {
    RemoteEmbeddingStore::Options o;
    o.url = c.url;
    o.timeout = std::chrono::milliseconds(c.timeout_ms);
    o.cache_path = c.cache_path;
    return std::make_shared<RemoteEmbeddingStore>(o);
  }
  throw ValidationError("unknown embedding provider: " + c.provider);
}

}  // namespace skillrec
