#include "biasloop/adapters/http_backend.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <semaphore>
#include <thread>

#include "biasloop/adapters/wire.hpp"
#include "biasloop/core/error.hpp"

namespace biasloop::adapters {

std::string_view to_string(Capability capability) noexcept {
  switch (capability) {
    case Capability::generate: return "generate";
    case Capability::describe: return "describe";
    case Capability::embed: return "embed";
    case Capability::saliency: return "saliency";
  }
  return "?";
}

std::string_view to_string(Modality modality) noexcept { return modality == Modality::text ? "text" : "image"; }

WireLogger stderr_wire_logger() {
  auto mutex = std::make_shared<std::mutex>();
  return [mutex](std::string_view line) {
    std::lock_guard lock(*mutex);
    std::cerr << "[wire] " << line << '\n';
  };
}

void BackendConfig::validate() const {
  if (!(timeout_seconds > 0.0)) throw Error(ErrorCode::ConfigError, "backend timeout must be positive");
  if (retry.max_retries < 0) throw Error(ErrorCode::ConfigError, "max_retries must be >= 0");
  if (retry.backoff_base_seconds < 0.0) throw Error(ErrorCode::ConfigError, "backoff base must be >= 0");
  if (concurrency_cap < 1) throw Error(ErrorCode::ConfigError, "concurrency cap must be >= 1");
}

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host:port
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::ConfigError, "endpoint '" + url + "' lacks a scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.trace_wire && !config_.logger) config_.logger = stderr_wire_logger();
  if (!config_.auth_token_env.empty()) {
    if (const char* token = std::getenv(config_.auth_token_env.c_str())) token_ = token;
  }
}

nlohmann::json HttpBackend::post(Capability capability, const nlohmann::json& body) {
  const auto endpoint = config_.endpoints.find(capability);
  if (endpoint == config_.endpoints.end())
    throw Error(ErrorCode::ConfigError, "no endpoint configured for " + std::string(to_string(capability)));
  const auto [origin, path] = split_url(endpoint->second);

  httplib::Client client(origin);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(config_.timeout_seconds));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

  const auto payload = body.dump();
  if (config_.trace_wire)
    config_.logger("POST " + endpoint->second + (token_.empty() ? "" : " Authorization: Bearer <redacted>") + " " +
                   payload);

  auto result = client.Post(path, headers, payload, "application/json");
  if (!result)
    throw BackendUnavailable(std::string(to_string(capability)) + ": " + httplib::to_string(result.error()));

  if (config_.trace_wire) config_.logger(std::to_string(result->status) + " " + endpoint->second + " " + result->body);

  if (result->status < 200 || result->status >= 300) {
    std::string detail = "HTTP " + std::to_string(result->status);
    auto error = nlohmann::json::parse(result->body, nullptr, false);
    if (error.is_object() && error.contains("code") && error.contains("message"))
      detail += " " + error["code"].dump() + ": " + error["message"].dump();
    throw BackendUnavailable(std::string(to_string(capability)) + ": " + detail);
  }
  return wire::parse_object(result->body);
}

Image HttpBackend::generate_image(const std::string& prompt, std::uint64_t seed) {
  return wire::parse_generate_response(post(Capability::generate, wire::to_json(wire::GenerateRequest{prompt, seed, config_.params})));
}

Description HttpBackend::describe_image(const std::string& prompt, const Image& image) {
  return wire::parse_describe_response(post(Capability::describe, wire::to_json(wire::DescribeRequest{prompt, image, config_.params})));
}

Embedding HttpBackend::embed(const EmbedPayload& payload) {
  return wire::parse_embed_response(post(Capability::embed, wire::embed_request(payload)));
}

Heatmap HttpBackend::fetch_saliency(const Image& image, const std::string& prompt, std::size_t token_index) {
  return wire::heatmap_from_json(post(Capability::saliency, wire::to_json(wire::SaliencyRequest{image, prompt, token_index})));
}

RetryingBackend::RetryingBackend(std::shared_ptr<Backend> inner, RetryPolicy policy)
    : inner_(std::move(inner)), policy_(policy) {
  if (policy_.max_retries < 0) throw Error(ErrorCode::ConfigError, "max_retries must be >= 0");
}

template <typename Call>
auto RetryingBackend::attempt(Capability capability, Call&& call) -> decltype(call()) {
  for (int attempt_index = 0;; ++attempt_index) {
    try {
      return call();
    } catch (const BackendUnavailable& failure) {
      if (attempt_index >= policy_.max_retries)
        throw BackendUnavailable(std::string(to_string(capability)) + " failed after " +
                                 std::to_string(attempt_index + 1) + " attempt(s): " + failure.what());
      const double delay = policy_.backoff_base_seconds * std::pow(2.0, attempt_index);
      if (delay > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
  }
}

Image RetryingBackend::generate_image(const std::string& prompt, std::uint64_t seed) {
  return attempt(Capability::generate, [&] { return inner_->generate_image(prompt, seed); });
}

Description RetryingBackend::describe_image(const std::string& prompt, const Image& image) {
  return attempt(Capability::describe, [&] { return inner_->describe_image(prompt, image); });
}

Embedding RetryingBackend::embed(const EmbedPayload& payload) {
  return attempt(Capability::embed, [&] { return inner_->embed(payload); });
}

Heatmap RetryingBackend::fetch_saliency(const Image& image, const std::string& prompt, std::size_t token_index) {
  return attempt(Capability::saliency, [&] { return inner_->fetch_saliency(image, prompt, token_index); });
}

struct ThrottledBackend::Gates {
  explicit Gates(int cap) : generate(cap), describe(cap), embed(cap), saliency(cap) {}
  std::counting_semaphore<> generate;
  std::counting_semaphore<> describe;
  std::counting_semaphore<> embed;
  std::counting_semaphore<> saliency;
};

namespace {

class GateHold {
 public:
  explicit GateHold(std::counting_semaphore<>& gate) : gate_(gate) { gate_.acquire(); }
  ~GateHold() { gate_.release(); }
  GateHold(const GateHold&) = delete;
  GateHold& operator=(const GateHold&) = delete;

 private:
  std::counting_semaphore<>& gate_;
};

}  // namespace

ThrottledBackend::ThrottledBackend(std::shared_ptr<Backend> inner, int max_in_flight) : inner_(std::move(inner)) {
  if (max_in_flight < 1) throw Error(ErrorCode::ConfigError, "in-flight cap must be >= 1");
  gates_ = std::make_unique<Gates>(max_in_flight);
}

ThrottledBackend::~ThrottledBackend() = default;

Image ThrottledBackend::generate_image(const std::string& prompt, std::uint64_t seed) {
  GateHold hold(gates_->generate);
  return inner_->generate_image(prompt, seed);
}

Description ThrottledBackend::describe_image(const std::string& prompt, const Image& image) {
  GateHold hold(gates_->describe);
  return inner_->describe_image(prompt, image);
}

Embedding ThrottledBackend::embed(const EmbedPayload& payload) {
  GateHold hold(gates_->embed);
  return inner_->embed(payload);
}

Heatmap ThrottledBackend::fetch_saliency(const Image& image, const std::string& prompt, std::size_t token_index) {
  GateHold hold(gates_->saliency);
  return inner_->fetch_saliency(image, prompt, token_index);
}

std::shared_ptr<Backend> make_http_backend(BackendConfig config) {
  const auto retry = config.retry;
  const auto cap = config.concurrency_cap;
  auto http = std::make_shared<HttpBackend>(std::move(config));
  return std::make_shared<ThrottledBackend>(std::make_shared<RetryingBackend>(std::move(http), retry), cap);
}

}  // namespace biasloop::adapters
