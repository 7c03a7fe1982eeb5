#pragma once

#include <memory>
#include <string>

#include "biasloop/adapters/backend.hpp"

namespace biasloop::adapters {

// Serves a Backend over the JSON wire protocol on /generate, /describe,
// /embed and /saliency. Used to expose the synthetic world to external
// clients and to exercise HttpBackend end to end.
class WireServer {
 public:
  explicit WireServer(std::shared_ptr<Backend> backend);
  ~WireServer();

  WireServer(const WireServer&) = delete;
  WireServer& operator=(const WireServer&) = delete;

  // Binds (port 0 picks a free port), starts the listener thread and returns the port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Blocks in the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

  std::string base_url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace biasloop::adapters
