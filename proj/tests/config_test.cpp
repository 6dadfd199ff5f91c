#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "skillrec/config.hpp"
#include "skillrec/error.hpp"
#include "support.hpp"

using namespace skillrec;
using nlohmann::json;

namespace {

// Sets an environment variable for the lifetime of the guard.
class EnvGuard {
 public:
  EnvGuard(const char* name, const char* value) : name_(name) { ::setenv(name, value, 1); }
  ~EnvGuard() { ::unsetenv(name_); }

 private:
  const char* name_;
};

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults") {
    const Config c;
    CHECK(c.k == 5);
    CHECK(c.threshold == 0.85);
    CHECK(c.explanation_size == 7);
    CHECK(c.embedding.dim == 768);
    CHECK(c.embedding.provider == "hashed");
  }

  TEST_CASE("json overrides and round-trip") {
    const auto c = config_from_json(json{{"d_model", 16}, {"k", 3}, {"embedding", {{"dim", 64}}}});
    CHECK(c.model.d_model == 16);
    CHECK(c.k == 3);
    CHECK(c.embedding.dim == 64);
    const auto back = config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
  }

  TEST_CASE("unknown keys and bad values are rejected") {
    CHECK_THROWS_AS(config_from_json(json{{"colour", "red"}}), ValidationError);
    CHECK_THROWS_AS(config_from_json(json{{"embedding", {{"size", 3}}}}), ValidationError);
    CHECK_THROWS_AS(config_from_json(json{{"k", 0}}), ValidationError);
    CHECK_THROWS_AS(config_from_json(json{{"k", "five"}}), ValidationError);
    CHECK_THROWS_AS(config_from_json(json{{"port", 70000}}), ValidationError);
    CHECK_THROWS_AS(config_from_json(json::array()), ValidationError);
  }

  TEST_CASE("file loading") {
    testing::TempDir dir;
    std::ofstream(dir / "c.json") << R"({"port": 9000})";
    std::ofstream(dir / "bad.json") << "{";
    CHECK(load_config(dir / "c.json").port == 9000);
    CHECK_THROWS_AS(load_config(dir / "bad.json"), ParseError);
    CHECK_THROWS_AS(load_config(dir / "none.json"), NotFoundError);
  }

  TEST_CASE("environment overrides the file") {
    testing::TempDir dir;
    std::ofstream(dir / "c.json") << R"({"port": 9000, "data_dir": "x"})";
    {
      const EnvGuard cfg("SKILLREC_CONFIG", (dir / "c.json").c_str());
      CHECK(resolve_config(std::nullopt).port == 9000);
      const EnvGuard port("SKILLREC_PORT", "9100");
      const EnvGuard data("SKILLREC_DATA_DIR", "/tmp/elsewhere");
      const auto c = resolve_config(std::nullopt);
      CHECK(c.port == 9100);
      CHECK(c.data_dir == "/tmp/elsewhere");
    }
    {
      const EnvGuard url("SKILLREC_EMBED_URL", "http://127.0.0.1:1");
      const auto c = resolve_config(std::nullopt);
      CHECK(c.embedding.provider == "remote");
      CHECK(c.embedding.url == "http://127.0.0.1:1");
    }
    {
      const EnvGuard port("SKILLREC_PORT", "abc");
      CHECK_THROWS_AS(resolve_config(std::nullopt), ValidationError);
    }
  }

  TEST_CASE("embedding store factory") {
    EmbeddingConfig e;
    e.dim = 32;
    CHECK(make_embedding_store(e)->dim() == 32);
    e.provider = "telepathy";
    CHECK_THROWS_AS(make_embedding_store(e), ValidationError);
    e.provider = "file";
    e.path = "/nonexistent/e.tsv";
    CHECK_THROWS_AS(make_embedding_store(e), NotFoundError);
  }
}
