#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include "topopt/problems.hpp"
#include "topopt/solver.hpp"

namespace topopt::preview {

enum class Status { idle, running, paused, converged, budget, error };
std::string_view to_string(Status s);

/// JSON body plus HTTP status code.
struct Reply {
  int code = 200;
  std::string body;
};

/// One density frame: the JSON header and the f32le payload.
struct Frame {
  int iter = 0;
  std::string header;
  std::string payload;
};

/// Latest-wins mailbox between a solver worker and any number of stream
/// readers. publish() never waits on a reader.
class FrameHub {
 public:
  void publish(std::shared_ptr<const Frame> frame);
  void clear();
  void close();

  /// Blocks until a frame newer than `seen` exists, the hub closes, or the
  /// timeout passes. Updates `seen` when a frame is returned.
  std::shared_ptr<const Frame> wait_newer(std::uint64_t& seen, std::chrono::milliseconds timeout);
  bool closed() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::shared_ptr<const Frame> latest_;
  std::uint64_t seq_ = 0;
  bool closed_ = false;
};

Frame make_frame(const solver::SolverState& state, int nx, int ny);

class Session {
 public:
  explicit Session(std::string id);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const { return id_; }
  FrameHub& frames() { return hub_; }

  Reply put_problem(std::string_view document);
  Reply patch_config(std::string_view document);
  Reply start();
  Reply pause();
  Reply resume();
  Reply reset();
  Reply state() const;
  Status status() const;

  void shutdown();

 private:
  struct Progress {
    int iter = 0;
    double compliance = 0.0;
    double residual_inf = 0.0;
    double volume = 0.0;
  };

  void stop_worker();
  void work(solver::DesignProblem problem, solver::SolverConfig config, int nx, int ny);

  const std::string id_;
  std::mutex ops_mu_;  // serializes control operations (held across joins)
  mutable std::mutex mu_;  // guards the fields below; the worker takes only this one
  std::optional<problems::ProblemSpec> spec_;
  solver::SolverConfig config_;
  Status status_ = Status::idle;
  Progress progress_;
  std::string error_;
  std::unique_ptr<solver::RunControl> control_;
  std::thread worker_;
  FrameHub hub_;
};

class SessionManager {
 public:
  std::shared_ptr<Session> create();
  std::shared_ptr<Session> find(const std::string& id) const;
  void shutdown();

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_ = 1;
};

} // namespace topopt::preview
