#include "session.hpp"

#include <bit>
#include <cstdio>
#include <random>

#include <nlohmann/json.hpp>

#include "topopt/io.hpp"

namespace topopt::preview {

using nlohmann::json;

namespace {

Reply ok(json body = json::object()) { return {200, body.dump()}; }

Reply fail(int code, const std::string& message) {
  return {code, json{{"error", message}}.dump()};
}

Reply conflict(Status s, const std::string& action) {
  return fail(409, "cannot " + action + " while " + std::string(to_string(s)));
}

} // namespace

std::string_view to_string(Status s) {
  switch (s) {
    case Status::idle: return "idle";
    case Status::running: return "running";
    case Status::paused: return "paused";
    case Status::converged: return "converged";
    case Status::budget: return "budget";
    case Status::error: return "error";
  }
  return "unknown";
}

void FrameHub::publish(std::shared_ptr<const Frame> frame) {
  {
    std::lock_guard lock(mu_);
    latest_ = std::move(frame);
    ++seq_;
  }
  cv_.notify_all();
}

void FrameHub::clear() {
  std::lock_guard lock(mu_);
  latest_.reset();
}

void FrameHub::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool FrameHub::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::shared_ptr<const Frame> FrameHub::wait_newer(std::uint64_t& seen,
                                                  std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return closed_ || (seq_ > seen && latest_); });
  if (closed_ || seq_ <= seen || !latest_) return nullptr;
  seen = seq_;
  return latest_;
}

Frame make_frame(const solver::SolverState& state, int nx, int ny) {
  Frame f;
  f.iter = state.iter;
  f.header = json{{"iter", state.iter},
                  {"compliance", state.compliance},
                  {"residual_inf", state.residual_inf},
                  {"volume", state.volume},
                  {"nx", nx},
                  {"ny", ny},
                  {"encoding", "f32le"}}
                 .dump();
  f.payload.resize(4 * state.v_phys.size());
  for (std::size_t i = 0; i < state.v_phys.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(state.v_phys[i]));
    for (int b = 0; b < 4; ++b) f.payload[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  return f;
}

Session::Session(std::string id) : id_(std::move(id)) {}

Session::~Session() { shutdown(); }

void Session::shutdown() {
  {
    std::lock_guard ops(ops_mu_);
    stop_worker();
  }
  hub_.close();
}

Status Session::status() const {
  std::lock_guard lock(mu_);
  return status_;
}

// Caller holds ops_mu_.
void Session::stop_worker() {
  if (control_) control_->stop();
  if (worker_.joinable()) worker_.join();
  std::lock_guard lock(mu_);
  control_.reset();
}

Reply Session::put_problem(std::string_view document) {
  std::lock_guard ops(ops_mu_);
  const Status s = status();
  if (s != Status::idle && s != Status::paused) return conflict(s, "edit the problem");
  problems::ProblemSpec spec;
  try {
    spec = io::parse_problem(document);
  } catch (const std::exception& e) {
    return fail(422, e.what());
  }
  // The paused iterate belongs to the old geometry; drop it.
  stop_worker();
  hub_.clear();
  std::lock_guard lock(mu_);
  spec_ = std::move(spec);
  status_ = Status::idle;
  progress_ = {};
  error_.clear();
  return ok({{"status", to_string(status_)}});
}

Reply Session::patch_config(std::string_view document) {
  std::lock_guard ops(ops_mu_);
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    return fail(422, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) return fail(422, "config: expected an object");

  std::lock_guard lock(mu_);
  const bool live = status_ == Status::running || status_ == Status::paused;
  if (live) {
    for (const auto& [key, _] : doc.items())
      if (key != "alpha0" && key != "snapshot_every")
        return fail(409, "only alpha0 and snapshot_every can change during a run (got '" + key +
                             "')");
  }
  // Merge into the current config and revalidate through the strict parser.
  json merged = json::parse(io::serialize_config(config_));
  for (const auto& [key, value] : doc.items()) merged[key] = value;
  solver::SolverConfig next;
  try {
    next = io::parse_config(merged.dump());
  } catch (const std::exception& e) {
    return fail(422, e.what());
  }
  if (live && control_) {
    if (doc.contains("alpha0")) control_->update_alpha0(next.effective_alpha0());
    if (doc.contains("snapshot_every")) control_->update_snapshot_every(next.snapshot_every);
  }
  config_ = next;
  return ok(json::parse(io::serialize_config(config_)));
}

Reply Session::start() {
  std::lock_guard ops(ops_mu_);
  std::optional<solver::DesignProblem> problem;
  solver::SolverConfig config;
  int nx = 0, ny = 0;
  {
    std::lock_guard lock(mu_);
    if (status_ != Status::idle) return conflict(status_, "start");
    if (!spec_) return fail(409, "no problem set; PUT a problem document first");
    try {
      problem = problems::make_design_problem(*spec_);
    } catch (const std::exception& e) {
      return fail(422, e.what());
    }
    config = config_;
    nx = spec_->nx;
    ny = spec_->ny;
  }
  if (worker_.joinable()) worker_.join();
  hub_.clear();
  std::lock_guard lock(mu_);
  control_ = std::make_unique<solver::RunControl>();
  status_ = Status::running;
  progress_ = {};
  error_.clear();
  worker_ = std::thread(&Session::work, this, std::move(*problem), config, nx, ny);
  return ok({{"status", to_string(status_)}});
}

Reply Session::pause() {
  std::lock_guard ops(ops_mu_);
  std::lock_guard lock(mu_);
  if (status_ != Status::running) return conflict(status_, "pause");
  control_->pause();
  status_ = Status::paused;
  return ok({{"status", to_string(status_)}});
}

Reply Session::resume() {
  std::lock_guard ops(ops_mu_);
  std::lock_guard lock(mu_);
  if (status_ != Status::paused) return conflict(status_, "resume");
  status_ = Status::running;
  control_->resume();
  return ok({{"status", to_string(status_)}});
}

Reply Session::reset() {
  std::lock_guard ops(ops_mu_);
  stop_worker();
  hub_.clear();
  std::lock_guard lock(mu_);
  status_ = Status::idle;
  progress_ = {};
  error_.clear();
  return ok({{"status", to_string(status_)}});
}

Reply Session::state() const {
  std::lock_guard lock(mu_);
  json body{{"status", to_string(status_)},
            {"iter", progress_.iter},
            {"compliance", progress_.compliance},
            {"residual_inf", progress_.residual_inf},
            {"volume", progress_.volume}};
  if (!error_.empty()) body["error"] = error_;
  return ok(body);
}

void Session::work(solver::DesignProblem problem, solver::SolverConfig config, int nx, int ny) {
  solver::RunControl* control = nullptr;
  {
    std::lock_guard lock(mu_);
    control = control_.get();
  }
  auto finish = [&](Status s, const std::string& message) {
    std::lock_guard lock(mu_);
    status_ = s;
    error_ = message;
  };
  try {
    solver::BilevelSolver solver(std::move(problem), config);
    int published = -1;
    auto publish = [&] {
      if (solver.state().iter == published) return;
      published = solver.state().iter;
      hub_.publish(std::make_shared<const Frame>(make_frame(solver.state(), nx, ny)));
    };
    while (solver.state().iter < config.max_iters) {
      if (!control->checkpoint(solver)) return;
      solver.step();
      const auto& s = solver.state();
      {
        std::lock_guard lock(mu_);
        progress_ = {s.iter, s.compliance, s.residual_inf, s.volume};
      }
      const int every = solver.config().snapshot_every;
      const bool done = solver.converged();
      if (done || (every > 0 && s.iter % every == 0)) publish();
      if (done) return finish(Status::converged, {});
    }
    publish();
    finish(Status::budget, {});
  } catch (const std::exception& e) {
    finish(Status::error, e.what());
  }
}

std::shared_ptr<Session> SessionManager::create() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu_);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%llx%016llx", static_cast<unsigned long long>(next_++),
                static_cast<unsigned long long>(rng()));
  auto session = std::make_shared<Session>(buf);
  sessions_.emplace(session->id(), session);
  return session;
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void SessionManager::shutdown() {
  std::map<std::string, std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mu_);
    all.swap(sessions_);
  }
  for (auto& [_, s] : all) s->shutdown();
}

} // namespace topopt::preview
