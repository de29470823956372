#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "cog/service.hpp"

namespace httplib {
class Server;
}

namespace cog {

struct HttpOptions {
  // When set, every /v1 route except /v1/health requires the header
  // "X-Api-Token: <token>" or "Authorization: Bearer <token>".
  std::optional<std::string> api_token;
  // Static verification UI served under /ui/ when set.
  std::optional<std::filesystem::path> ui_dir;
};

// Registers the JSON API routes of a GroundingService on a server.
void mount_routes(httplib::Server& server, GroundingService& service, const HttpOptions& options);

// Owns an httplib server running on a background thread.
class HttpServer {
 public:
  HttpServer(GroundingService& service, HttpOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds and starts listening; port 0 picks a free port. Returns the bound
  // port. Throws Error when the address is unavailable.
  int start(const std::string& host, int port);

  // Blocks until the server stops.
  void wait();
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace cog
