#pragma once

#include <sys/socket.h>

#include <atomic>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "diffpilot/bridge/session.hpp"

namespace diffpilot::bridge {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

struct ServerConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  SessionConfig session;
  std::optional<std::filesystem::path> static_dir;
};

inline const char* mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

/// WebSocket endpoint ws://host:port/session, one thread and one Session per
/// connection. Other GET paths are served from static_dir when configured.
class Server {
 public:
  Server(std::shared_ptr<const Model> model, ServerConfig cfg, LogFn log = {})
      : model_(std::move(model)), cfg_(std::move(cfg)), log_(std::move(log)), acceptor_(ioc_) {
    const tcp::endpoint ep(asio::ip::make_address(cfg_.address), cfg_.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(asio::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
    port_ = acceptor_.local_endpoint().port();
  }

  ~Server() { stop(); }
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const { return port_; }

  /// Accept loop; returns after stop().
  void run() {
    while (!stopping_) {
      auto sock = std::make_shared<tcp::socket>(ioc_);
      beast::error_code ec;
      acceptor_.accept(*sock, ec);
      if (ec) {
        if (stopping_) break;
        log("warn", "accept: " + ec.message());
        continue;
      }
      std::lock_guard lk(mu_);
      if (stopping_) break;
      const std::string id = std::to_string(next_id_++);
      conns_.push_back({sock, {}});
      auto& slot = conns_.back();
      slot.thread = std::thread([this, sock, id] { serve_connection(*sock, id); });
    }
  }

  void start() {
    runner_ = std::thread([this] { run(); });
  }

  void stop() {
    if (stopping_.exchange(true)) {
      if (runner_.joinable()) runner_.join();
      return;
    }
    ::shutdown(acceptor_.native_handle(), SHUT_RDWR);
    if (runner_.joinable()) runner_.join();
    std::list<Conn> conns;
    {
      std::lock_guard lk(mu_);
      for (auto& c : conns_) ::shutdown(c.sock->native_handle(), SHUT_RDWR);
      conns.swap(conns_);
    }
    for (auto& c : conns)
      if (c.thread.joinable()) c.thread.join();
    beast::error_code ec;
    acceptor_.close(ec);
  }

 private:
  struct Conn {
    std::shared_ptr<tcp::socket> sock;
    std::thread thread;
  };

  void log(const std::string& level, const std::string& msg) const {
    if (log_) log_(level, msg);
  }

  void serve_connection(tcp::socket& sock, const std::string& id) {
    try {
      beast::flat_buffer buf;
      http::request<http::string_body> req;
      http::read(sock, buf, req);
      if (websocket::is_upgrade(req)) {
        if (req.target() != "/session") {
          send_status(sock, req, http::status::not_found, "unknown websocket path\n");
          return;
        }
        websocket::stream<tcp::socket&> ws(sock);
        ws.accept(req);
        log("info", "session " + id + " opened");
        Session session(model_, cfg_.session, id, log_);
        for (;;) {
          beast::flat_buffer in;
          ws.read(in);
          const auto reply = session.handle(beast::buffers_to_string(in.data()));
          if (reply) {
            ws.text(true);
            ws.write(asio::buffer(*reply));
          }
        }
      }
      serve_static(sock, req);
    } catch (const beast::system_error& e) {
      if (e.code() != websocket::error::closed && e.code() != http::error::end_of_stream)
        log("debug", "connection " + id + ": " + e.code().message());
    } catch (const std::exception& e) {
      log("error", "connection " + id + ": " + e.what());
    }
    log("info", "session " + id + " closed");
  }

  static void send_status(tcp::socket& sock, const http::request<http::string_body>& req, http::status st,
                          const std::string& body) {
    http::response<http::string_body> res{st, req.version()};
    res.set(http::field::content_type, "text/plain");
    res.keep_alive(false);
    res.body() = body;
    res.prepare_payload();
    http::write(sock, res);
  }

  void serve_static(tcp::socket& sock, const http::request<http::string_body>& req) {
    if (!cfg_.static_dir || req.method() != http::verb::get) {
      send_status(sock, req, http::status::not_found, "not found\n");
      return;
    }
    std::string target(req.target());
    if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);
    if (target.empty() || target == "/") target = "/index.html";
    if (target.find("..") != std::string::npos) {
      send_status(sock, req, http::status::bad_request, "bad path\n");
      return;
    }
    const auto path = *cfg_.static_dir / target.substr(1);
    std::string body;
    try {
      body = read_text_file(path);
    } catch (const IoError&) {
      send_status(sock, req, http::status::not_found, "not found\n");
      return;
    }
    http::response<http::string_body> res{http::status::ok, req.version()};
    res.set(http::field::content_type, mime_type(path));
    res.keep_alive(false);
    res.body() = std::move(body);
    res.prepare_payload();
    http::write(sock, res);
  }

  std::shared_ptr<const Model> model_;
  ServerConfig cfg_;
  LogFn log_;
  asio::io_context ioc_;
  tcp::acceptor acceptor_;
  unsigned short port_ = 0;
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::list<Conn> conns_;
  std::size_t next_id_ = 0;
  std::thread runner_;
};

}  // namespace diffpilot::bridge
