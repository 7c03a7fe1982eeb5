#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "biasloop/adapters/backend.hpp"

namespace biasloop::adapters {

struct RetryPolicy {
  int max_retries = 2;
  double backoff_base_seconds = 0.5;  // delay before retry i is base * 2^i
};

// Receives one line per request/response when wire tracing is on.
using WireLogger = std::function<void(std::string_view)>;
WireLogger stderr_wire_logger();

struct BackendConfig {
  std::map<Capability, std::string> endpoints;  // full URLs, e.g. http://127.0.0.1:8080/generate
  std::string auth_token_env;                   // env var holding a bearer token; empty = no auth
  double timeout_seconds = 60.0;
  RetryPolicy retry;
  int concurrency_cap = 4;                        // in-flight requests per capability
  nlohmann::json params = nlohmann::json::object();  // forwarded verbatim to generate/describe
  bool trace_wire = false;
  WireLogger logger;  // defaults to stderr when trace_wire is set

  void validate() const;  // timeouts > 0, retries >= 0, cap >= 1; ConfigError otherwise
};

// Single-attempt JSON-over-HTTP client. Transport errors and non-2xx statuses
// raise BackendUnavailable; unusable 2xx bodies raise ProtocolViolation.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendConfig config);

  Image generate_image(const std::string& prompt, std::uint64_t seed) override;
  Description describe_image(const std::string& prompt, const Image& image) override;
  Embedding embed(const EmbedPayload& payload) override;
  Heatmap fetch_saliency(const Image& image, const std::string& prompt, std::size_t token_index) override;

 private:
  nlohmann::json post(Capability capability, const nlohmann::json& body);

  BackendConfig config_;
  std::string token_;
};

// Retries BackendUnavailable per policy; other errors pass through untouched.
class RetryingBackend final : public Backend {
 public:
  RetryingBackend(std::shared_ptr<Backend> inner, RetryPolicy policy);

  Image generate_image(const std::string& prompt, std::uint64_t seed) override;
  Description describe_image(const std::string& prompt, const Image& image) override;
  Embedding embed(const EmbedPayload& payload) override;
  Heatmap fetch_saliency(const Image& image, const std::string& prompt, std::size_t token_index) override;

 private:
  template <typename Call>
  auto attempt(Capability capability, Call&& call) -> decltype(call());

  std::shared_ptr<Backend> inner_;
  RetryPolicy policy_;
};

// Bounds in-flight calls per capability.
class ThrottledBackend final : public Backend {
 public:
  ThrottledBackend(std::shared_ptr<Backend> inner, int max_in_flight);
  ~ThrottledBackend() override;

  Image generate_image(const std::string& prompt, std::uint64_t seed) override;
  Description describe_image(const std::string& prompt, const Image& image) override;
  Embedding embed(const EmbedPayload& payload) override;
  Heatmap fetch_saliency(const Image& image, const std::string& prompt, std::size_t token_index) override;

 private:
  struct Gates;
  std::shared_ptr<Backend> inner_;
  std::unique_ptr<Gates> gates_;
};

// Throttled(Retrying(Http(config))).
std::shared_ptr<Backend> make_http_backend(BackendConfig config);

}  // namespace biasloop::adapters
