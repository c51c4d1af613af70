#pragma once

#include <memory>
#include <optional>
#include <string>

#include "nailguard/service.hpp"

namespace nailguard {

/// JSON-over-HTTP front end for NailService. Requests must carry
/// "Authorization: Bearer <token>" when a token is set.
class HttpServer {
 public:
  HttpServer(NailService& service, std::optional<std::string> token);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// port 0 picks a free port. Returns the bound port; throws IoError.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// NAILGUARD_TOKEN when set and non-empty.
std::optional<std::string> token_from_environment();

}  // namespace nailguard
