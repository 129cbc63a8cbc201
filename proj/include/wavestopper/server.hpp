#pragma once

// Network front-end for a LiveSession.
//
//   /ws            WebSocket: frames and replies out, commands in
//   GET /snapshot  latest frame
//   GET /health    {"status": running|paused|halted, "t": .., "mode": ..}
//
// On connect, a WebSocket client first receives a "hello" message with the
// ring geometry and the sampled switching boundaries.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "wavestopper/live_session.hpp"

namespace wavestopper::service {

struct ServerOptions {
  std::string bind_address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  SessionOptions session;
  double time_scale = 1.0;         // simulated seconds per wall second; 0 = unpaced
  std::size_t client_queue = 64;   // frames buffered per client before dropping
};

/// Parses "host:port".
std::pair<std::string, unsigned short> parse_bind_address(const std::string& text);

class Server {
 public:
  /// Binds immediately; throws std::runtime_error when the address is in use.
  Server(SimConfig config, std::optional<SetpointSchedule> schedule, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const;

  /// Starts the network and stepping threads.
  void start();
  /// Stops all threads; idempotent.
  void stop();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace wavestopper::service
