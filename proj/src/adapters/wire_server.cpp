#include "biasloop/adapters/wire_server.hpp"

#include <httplib.h>

#include <thread>

#include "biasloop/adapters/wire.hpp"
#include "biasloop/core/error.hpp"

namespace biasloop::adapters {

struct WireServer::Impl {
  std::shared_ptr<Backend> backend;
  httplib::Server server;
  std::thread listener;
  std::string host;
  int port = 0;
};

namespace {

template <typename Handler>
httplib::Server::Handler json_route(Handler handler) {
  return [handler](const httplib::Request& request, httplib::Response& response) {
    try {
      const auto body = wire::parse_object(request.body);
      response.set_content(handler(body).dump(), "application/json");
    } catch (const Error& e) {
      const bool client_fault = e.code() == ErrorCode::ProtocolViolation || e.code() == ErrorCode::InvalidArgument;
      response.status = client_fault ? 400 : 503;
      response.set_content(wire::error_body(to_string(e.code()), e.what()).dump(), "application/json");
    } catch (const std::exception& e) {
      response.status = 500;
      response.set_content(wire::error_body("Internal", e.what()).dump(), "application/json");
    }
  };
}

}  // namespace

WireServer::WireServer(std::shared_ptr<Backend> backend) : impl_(std::make_unique<Impl>()) {
  impl_->backend = std::move(backend);
  auto& backend_ref = impl_->backend;
  impl_->server.Post("/generate", json_route([&backend_ref](const wire::json& body) {
    const auto request = wire::parse_generate_request(body);
    return wire::generate_response(backend_ref->generate_image(request.prompt, request.seed));
  }));
  impl_->server.Post("/describe", json_route([&backend_ref](const wire::json& body) {
    const auto request = wire::parse_describe_request(body);
    return wire::describe_response(backend_ref->describe_image(request.prompt, request.image));
  }));
  impl_->server.Post("/embed", json_route([&backend_ref](const wire::json& body) {
    return wire::embed_response(backend_ref->embed(wire::parse_embed_request(body)));
  }));
  impl_->server.Post("/saliency", json_route([&backend_ref](const wire::json& body) {
    const auto request = wire::parse_saliency_request(body);
    return wire::heatmap_to_json(backend_ref->fetch_saliency(request.image, request.prompt, request.token_index));
  }));
}

WireServer::~WireServer() { stop(); }

int WireServer::start(const std::string& host, int port) {
  impl_->host = host;
  impl_->port = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (impl_->port < 0) throw Error(ErrorCode::IoError, "could not bind " + host + ":" + std::to_string(port));
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void WireServer::run(const std::string& host, int port) {
  impl_->host = host;
  impl_->port = port;
  if (!impl_->server.listen(host, port)) throw Error(ErrorCode::IoError, "could not listen on " + base_url());
}

void WireServer::stop() {
  impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
}

std::string WireServer::base_url() const { return "http://" + impl_->host + ":" + std::to_string(impl_->port); }

}  // namespace biasloop::adapters
