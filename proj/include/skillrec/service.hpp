#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "json.hpp"
#include "skillrec/engine.hpp"

namespace httplib {
class Server;
}

namespace skillrec {

struct Reply {
  int status = 200;
  nlohmann::json body;
};

/// HTTP-independent request handlers over a swappable engine snapshot. Each
/// request works on the snapshot current when it started.
class Service {
 public:
  explicit Service(std::shared_ptr<FeedbackStore> feedback);

  void set_engine(std::shared_ptr<const EngineState> engine);
  std::shared_ptr<const EngineState> engine() const;

  Reply health() const;
  Reply recommendations(std::string_view student_id, const std::map<std::string, std::string>& query) const;
  Reply whatif(std::string_view body) const;
  Reply feedback(std::string_view body);
  Reply course(std::string_view id) const;
  Reply courses() const;
  Reply student(std::string_view id) const;

  /// Registers every /api route, plus static files when `static_dir` is set.
  void mount(httplib::Server& server, const std::filesystem::path& static_dir = {});

 private:
  mutable std::mutex engine_mutex_;
  std::shared_ptr<const EngineState> engine_;
  std::shared_ptr<FeedbackStore> feedback_;
};

/// Blocks serving on host:port until the server is stopped.
void run_server(Service& service, const std::string& host, int port, const std::filesystem::path& static_dir = {});

}  // namespace skillrec
