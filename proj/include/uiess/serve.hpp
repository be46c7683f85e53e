#pragma once

#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>

#include "uiess/inference.hpp"
#include "uiess/model.hpp"

namespace httplib {
class Server;
}

namespace uiess {

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  size_t cache_size = 64;
  int64_t max_side = 1024;
};

/// Port from the UIESS_PORT environment variable, or `fallback` when unset.
int port_from_env(int fallback);

struct HttpResult {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Request handling without the transport: the HTTP server forwards to these, and tests can
/// call them directly. Model parameters are never written after construction.
class InferenceService {
 public:
  InferenceService(UiessModel model, std::string checkpoint_id, ServeOptions options = {});

  /// `domain` is "syn" or "real" (default real).
  HttpResult upload(std::span<const uint8_t> bytes, const std::string& domain = "real");
  /// `alpha` is the raw query value; empty means 1.
  HttpResult enhance(const std::string& token, const std::string& alpha);
  HttpResult latents(const std::string& token);
  HttpResult health() const;

  size_t cached() const;

  static constexpr double kMinAlpha = -0.5;
  static constexpr double kMaxAlpha = 1.5;

 private:
  std::shared_ptr<const EncodedImage> find(const std::string& token);
  std::string new_token();

  UiessModel model_;
  std::string checkpoint_id_;
  ServeOptions options_;

  mutable std::mutex mutex_;
  std::list<std::string> lru_;  // most recent first
  struct Entry {
    std::shared_ptr<const EncodedImage> encoded;
    std::list<std::string>::iterator position;
  };
  std::unordered_map<std::string, Entry> cache_;
};

/// HTTP front end. CORS is open to any origin.
class Server {
 public:
  Server(std::shared_ptr<InferenceService> service, ServeOptions options);
  ~Server();

  /// Binds (port 0 picks a free one) and serves on a background thread. Returns the bound port.
  int start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();

 private:
  std::shared_ptr<InferenceService> service_;
  ServeOptions options_;
  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
};

}  // namespace uiess
