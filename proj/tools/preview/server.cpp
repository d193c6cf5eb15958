#include "server.hpp"

#include <poll.h>
#include <sys/socket.h>

#include <fstream>
#include <sstream>
#include <vector>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

namespace topopt::preview {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

namespace {

std::vector<std::string> split_path(std::string_view target) {
  const auto q = target.find('?');
  if (q != std::string_view::npos) target = target.substr(0, q);
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos < target.size()) {
    const auto next = target.find('/', pos);
    const auto end = next == std::string_view::npos ? target.size() : next;
    if (end > pos) parts.emplace_back(target.substr(pos, end - pos));
    pos = end + 1;
  }
  return parts;
}

Response make_response(const Request& req, http::status status, std::string body,
                       std::string_view type = "application/json") {
  Response res{status, req.version()};
  res.set(http::field::server, "topopt-preview");
  res.set(http::field::content_type, beast::string_view(type.data(), type.size()));
  res.keep_alive(req.keep_alive());
  res.body() = std::move(body);
  res.prepare_payload();
  return res;
}

Response json_error(const Request& req, http::status status, const std::string& message) {
  return make_response(req, status, nlohmann::json{{"error", message}}.dump());
}

Response from_reply(const Request& req, const Reply& r) {
  return make_response(req, static_cast<http::status>(r.code), r.body);
}

std::string_view mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".wasm") return "application/wasm";
  return "application/octet-stream";
}

// True when the peer has closed or sent something (we never expect input on
// a stream connection other than a close frame).
bool peer_active(int fd) {
  pollfd p{fd, POLLIN | POLLRDHUP, 0};
  return ::poll(&p, 1, 0) > 0;
}

} // namespace

struct Server::Impl {
  asio::io_context ioc;
  tcp::acceptor acceptor{ioc};

  static Response handle_api(Server& self, const Request& req,
                             const std::vector<std::string>& parts) {
    const auto method = req.method();
    if (parts.size() == 2) {
      if (method != http::verb::post) return json_error(req, http::status::method_not_allowed, "use POST");
      auto s = self.sessions_.create();
      return make_response(req, http::status::ok, nlohmann::json{{"session_id", s->id()}}.dump());
    }
    auto session = self.sessions_.find(parts[2]);
    if (!session) return json_error(req, http::status::not_found, "unknown session " + parts[2]);
    if (parts.size() != 4) return json_error(req, http::status::not_found, "no such endpoint");
    const std::string& action = parts[3];
    auto expect = [&](http::verb v) { return method == v; };
    if (action == "problem" && expect(http::verb::put))
      return from_reply(req, session->put_problem(req.body()));
    if (action == "config" && expect(http::verb::patch))
      return from_reply(req, session->patch_config(req.body()));
    if (action == "state" && expect(http::verb::get)) return from_reply(req, session->state());
    if (expect(http::verb::post)) {
      if (action == "start") return from_reply(req, session->start());
      if (action == "pause") return from_reply(req, session->pause());
      if (action == "resume") return from_reply(req, session->resume());
      if (action == "reset") return from_reply(req, session->reset());
    }
    if (action == "stream")
      return json_error(req, http::status::upgrade_required, "stream needs a WebSocket upgrade");
    const bool known = action == "problem" || action == "config" || action == "state" ||
                       action == "start" || action == "pause" || action == "resume" ||
                       action == "reset";
    return known ? json_error(req, http::status::method_not_allowed, "method not allowed")
                 : json_error(req, http::status::not_found, "no such endpoint");
  }

  static Response handle_static(const Server& self, const Request& req,
                                const std::vector<std::string>& parts) {
    if (req.method() != http::verb::get && req.method() != http::verb::head)
      return json_error(req, http::status::method_not_allowed, "method not allowed");
    std::filesystem::path rel;
    for (const auto& p : parts) {
      if (p == ".." || p == ".") return json_error(req, http::status::bad_request, "bad path");
      rel /= p;
    }
    if (rel.empty()) rel = "index.html";
    const auto path = self.options_.static_dir / rel;
    std::ifstream in(path, std::ios::binary);
    if (self.options_.static_dir.empty() || !in || std::filesystem::is_directory(path))
      return json_error(req, http::status::not_found, "not found");
    std::ostringstream ss;
    ss << in.rdbuf();
    return make_response(req, http::status::ok, ss.str(), mime_type(path));
  }

  static void stream(Server& self, tcp::socket socket, const Request& req,
                     std::shared_ptr<Session> session) {
    const int fd = socket.native_handle();
    websocket::stream<tcp::socket> ws(std::move(socket));
    ws.accept(req);
    std::uint64_t seen = 0;
    while (!self.stopping_ && !session->frames().closed()) {
      auto frame = session->frames().wait_newer(seen, std::chrono::milliseconds(100));
      if (frame) {
        ws.text(true);
        ws.write(asio::buffer(frame->header));
        ws.binary(true);
        ws.write(asio::buffer(frame->payload));
      }
      if (peer_active(fd)) break;
    }
    beast::error_code ec;
    ws.close(websocket::close_code::normal, ec);
  }

  static void serve(Server& self, tcp::socket socket) {
    beast::flat_buffer buffer;
    beast::error_code ec;
    for (;;) {
      Request req;
      http::read(socket, buffer, req, ec);
      if (ec) break;
      const auto target = req.target();
      const auto parts = split_path(std::string_view(target.data(), target.size()));
      const bool api = parts.size() >= 2 && parts[0] == "api" && parts[1] == "session";
      if (api && parts.size() == 4 && parts[3] == "stream" && websocket::is_upgrade(req)) {
        auto session = self.sessions_.find(parts[2]);
        if (session) {
          stream(self, std::move(socket), req, std::move(session));
          return;
        }
      }
      Response res;
      try {
        res = api ? handle_api(self, req, parts) : handle_static(self, req, parts);
      } catch (const std::exception& e) {
        res = json_error(req, http::status::internal_server_error, e.what());
      }
      const bool keep = res.keep_alive();
      http::write(socket, res, ec);
      if (ec || !keep) break;
    }
    socket.shutdown(tcp::socket::shutdown_both, ec);
  }
};

Server::Server(ServerOptions options)
    : options_(std::move(options)), impl_(std::make_unique<Impl>()) {}

Server::~Server() { stop(); }

void Server::start() {
  const auto addr = asio::ip::make_address(options_.address);
  tcp::endpoint ep{addr, options_.port};
  impl_->acceptor.open(ep.protocol());
  impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
  impl_->acceptor.bind(ep);
  impl_->acceptor.listen();
  port_ = impl_->acceptor.local_endpoint().port();
  acceptor_thread_ = std::thread(&Server::accept_loop, this);
}

void Server::accept_loop() {
  while (!stopping_) {
    beast::error_code ec;
    tcp::socket socket{impl_->ioc};
    impl_->acceptor.accept(socket, ec);
    if (ec) {
      if (stopping_) break;
      continue;
    }
    const int fd = socket.native_handle();
    track(fd);
    std::thread([this, fd, s = std::move(socket)]() mutable {
      try {
        Impl::serve(*this, std::move(s));
      } catch (const std::exception&) {
        // peer went away mid-write
      }
      untrack(fd);
    }).detach();
  }
}

void Server::track(int fd) {
  std::lock_guard lock(conn_mu_);
  open_fds_.insert(fd);
  ++active_;
}

void Server::untrack(int fd) {
  {
    std::lock_guard lock(conn_mu_);
    open_fds_.erase(fd);
    --active_;
  }
  conn_cv_.notify_all();
}

void Server::wait() {
  std::unique_lock lock(conn_mu_);
  conn_cv_.wait(lock, [&] { return stopping_.load(); });
}

void Server::stop() {
  if (stopping_.exchange(true)) return;
  conn_cv_.notify_all();
  if (impl_->acceptor.is_open()) ::shutdown(impl_->acceptor.native_handle(), SHUT_RDWR);
  if (acceptor_thread_.joinable()) acceptor_thread_.join();
  sessions_.shutdown();
  std::unique_lock lock(conn_mu_);
  for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
  conn_cv_.wait(lock, [&] { return active_ == 0; });
  lock.unlock();
  beast::error_code ec;
  impl_->acceptor.close(ec);
}

} // namespace topopt::preview
