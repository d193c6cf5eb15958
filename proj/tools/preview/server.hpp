#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>

#include "session.hpp"

namespace topopt::preview {

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  ///< 0 picks a free port
  std::filesystem::path static_dir;
};

/// HTTP + WebSocket front end. One thread per connection; the solver for
/// each session runs on its own worker thread.
class Server {
 public:
  explicit Server(ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting in the background.
  void start();
  /// Blocks until stop() is called from elsewhere.
  void wait();
  void stop();

  unsigned short port() const { return port_; }
  SessionManager& sessions() { return sessions_; }

 private:
  struct Impl;

  void accept_loop();
  void track(int fd);
  void untrack(int fd);

  ServerOptions options_;
  std::unique_ptr<Impl> impl_;
  SessionManager sessions_;
  unsigned short port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_thread_;
  std::mutex conn_mu_;
  std::condition_variable conn_cv_;
  std::set<int> open_fds_;
  int active_ = 0;
};

} // namespace topopt::preview
