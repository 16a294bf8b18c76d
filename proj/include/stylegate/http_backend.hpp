#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "stylegate/backend.hpp"

namespace httplib {
class Server;
}

namespace stylegate {

struct BackendDescriptor {
  BackendRole role = BackendRole::score;
  std::string base_url;  // http://host:port[/prefix]; requests go to <base_url>/<role>
  std::chrono::milliseconds timeout{10'000};
  std::optional<std::string> auth_token_env;  // env var holding a bearer token
};

/// Remote backends speaking the wire protocol. Transport failures map to
/// BackendError(timeout | unavailable | http_status), bad bodies to malformed_response.
BackendSet make_http_backends(const std::vector<BackendDescriptor>& descriptors);

/// At most `per_role` concurrent calls into each backend of the set.
BackendSet limit_concurrency(const BackendSet& inner, std::ptrdiff_t per_role);

/// Serves a BackendSet over the wire protocol (POST /<role>). Used to host the
/// mock backends for live-profile smoke tests.
class BackendProtocolServer {
 public:
  explicit BackendProtocolServer(BackendSet backends, std::optional<std::string> bearer_token = std::nullopt);
  ~BackendProtocolServer();
  BackendProtocolServer(const BackendProtocolServer&) = delete;
  BackendProtocolServer& operator=(const BackendProtocolServer&) = delete;

  /// Binds (port 0 picks a free one) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Binds and serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  void stop();
  int port() const { return port_; }

 private:
  void install_routes();

  BackendSet backends_;
  std::optional<std::string> bearer_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace stylegate
