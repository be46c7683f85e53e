#include "uiess/serve.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <random>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "uiess/errors.hpp"
#include "uiess/image.hpp"

namespace uiess {

namespace {

HttpResult json_result(int status, const nlohmann::json& j) { return {status, "application/json", j.dump()}; }

HttpResult error(int status, const std::string& message) { return json_result(status, {{"error", message}}); }

nlohmann::json to_json_vector(const torch::Tensor& v) {
  const auto t = v.reshape({-1}).to(torch::kFloat64).contiguous();
  return std::vector<double>(t.data_ptr<double>(), t.data_ptr<double>() + t.numel());
}

void reply(httplib::Response& res, const HttpResult& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

}  // namespace

int port_from_env(int fallback) {
  const char* env = std::getenv("UIESS_PORT");
  if (!env || !*env) return fallback;
  int port = 0;
  const auto [end, ec] = std::from_chars(env, env + std::strlen(env), port);
  if (ec != std::errc() || *end != '\0' || port < 0 || port > 65535) throw UsageError("UIESS_PORT is not a port number");
  return port;
}

InferenceService::InferenceService(UiessModel model, std::string checkpoint_id, ServeOptions options)
    : model_(std::move(model)), checkpoint_id_(std::move(checkpoint_id)), options_(options) {
  if (options_.cache_size == 0) throw UsageError("cache size must be positive");
  model_->eval();
}

std::string InferenceService::new_token() {
  static thread_local std::random_device rd;
  char buf[33];
  std::snprintf(buf, sizeof(buf), "%08x%08x%08x%08x", rd(), rd(), rd(), rd());
  return buf;
}

HttpResult InferenceService::upload(std::span<const uint8_t> bytes, const std::string& domain_name) {
  Domain domain;
  try {
    domain = parse_domain(domain_name.empty() ? "real" : domain_name);
  } catch (const std::exception&) {
    return error(422, "domain must be syn or real");
  }
  if (domain != Domain::Syn && domain != Domain::Real) return error(422, "domain must be syn or real");
  if (bytes.empty()) return error(415, "empty upload");

  Image image;
  try {
    image = decode_image(bytes);
  } catch (const DataError& e) {
    return error(415, e.what());
  } catch (const UsageError& e) {
    return error(422, e.what());
  }
  if (image.height() > options_.max_side || image.width() > options_.max_side) {
    return error(413, "image larger than " + std::to_string(options_.max_side) + " pixels on a side");
  }

  auto encoded = std::make_shared<const EncodedImage>(encode_image(*model_, image, domain));
  const std::string token = new_token();
  {
    std::lock_guard lock(mutex_);
    lru_.push_front(token);
    cache_[token] = {encoded, lru_.begin()};
    while (cache_.size() > options_.cache_size) {
      cache_.erase(lru_.back());
      lru_.pop_back();
    }
  }
  return json_result(200, {{"token", token}, {"width", image.width()}, {"height", image.height()}});
}

std::shared_ptr<const EncodedImage> InferenceService::find(const std::string& token) {
  std::lock_guard lock(mutex_);
  auto it = cache_.find(token);
  if (it == cache_.end()) return nullptr;
  lru_.splice(lru_.begin(), lru_, it->second.position);
  return it->second.encoded;
}

HttpResult InferenceService::enhance(const std::string& token, const std::string& alpha_text) {
  double alpha = 1.0;
  if (!alpha_text.empty()) {
    const auto [end, ec] = std::from_chars(alpha_text.data(), alpha_text.data() + alpha_text.size(), alpha);
    if (ec != std::errc() || end != alpha_text.data() + alpha_text.size() || !std::isfinite(alpha)) {
      return error(422, "alpha is not a number");
    }
  }
  if (alpha < kMinAlpha || alpha > kMaxAlpha) return error(422, "alpha outside [-0.5, 1.5]");
  const auto encoded = find(token);
  if (!encoded) return error(404, "unknown token");
  const auto png = encode_png(render(*model_, *encoded, alpha));
  return {200, "image/png", std::string(png.begin(), png.end())};
}

HttpResult InferenceService::latents(const std::string& token) {
  const auto encoded = find(token);
  if (!encoded) return error(404, "unknown token");
  return json_result(200, {{"style", to_json_vector(encoded->style.vector)},
                           {"clean_style", to_json_vector(encoded->clean_style.vector)},
                           {"domain", to_string(encoded->style.domain)}});
}

HttpResult InferenceService::health() const {
  return json_result(200, {{"checkpoint_id", checkpoint_id_}, {"model_config_hash", model_->config().hash()}});
}

size_t InferenceService::cached() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

Server::Server(std::shared_ptr<InferenceService> service, ServeOptions options)
    : service_(std::move(service)), options_(std::move(options)), http_(std::make_unique<httplib::Server>()) {
  auto& s = *http_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                         {"Access-Control-Allow-Headers", "Content-Type"}});
  s.set_payload_max_length(64u << 20);
  s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  auto svc = service_;
  s.Post("/api/upload", [svc](const httplib::Request& req, httplib::Response& res) {
    std::string_view body = req.body;
    if (req.is_multipart_form_data() && !req.files.empty()) body = req.files.begin()->second.content;
    const auto* data = reinterpret_cast<const uint8_t*>(body.data());
    reply(res, svc->upload({data, body.size()}, req.get_param_value("domain")));
  });
  s.Get("/api/enhance", [svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc->enhance(req.get_param_value("token"), req.get_param_value("alpha")));
  });
  s.Get("/api/latents", [svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc->latents(req.get_param_value("token")));
  });
  s.Get("/api/health", [svc](const httplib::Request&, httplib::Response& res) { reply(res, svc->health()); });
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      reply(res, error(500, e.what()));
    } catch (...) {
      reply(res, error(500, "internal error"));
    }
  });
}

Server::~Server() { stop(); }

int Server::start() {
  int port = options_.port;
  if (port == 0) {
    port = http_->bind_to_any_port(options_.host);
  } else if (!http_->bind_to_port(options_.host, port)) {
    port = -1;
  }
  if (port < 0) throw UsageError("cannot bind " + options_.host + ":" + std::to_string(options_.port));
  thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return port;
}

void Server::run() {
  if (!http_->listen(options_.host, options_.port)) {
    throw UsageError("cannot bind " + options_.host + ":" + std::to_string(options_.port));
  }
}

void Server::stop() {
  if (http_) http_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace uiess
