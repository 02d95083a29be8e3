#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "dmaudit/error.hpp"
#include "dmaudit/http.hpp"

namespace dmaudit::http {

struct Request {
  std::string listener;  // label of the accepting listener
  std::string method;
  std::string target;
  std::string version;
  HeaderList headers;
  std::string body;

  std::string path() const { return target.substr(0, target.find('?')); }
  std::string query() const {
    auto q = target.find('?');
    return q == std::string::npos ? std::string{} : target.substr(q + 1);
  }
};

struct ServerResponse {
  int status = 200;
  HeaderList headers;
  std::string body;
  bool close_without_reply = false;  // accept, read, then close with zero bytes

  static ServerResponse text(int status, std::string body, std::string type = "text/plain") {
    ServerResponse r;
    r.status = status;
    r.headers.emplace_back("content-type", std::move(type));
    r.body = std::move(body);
    return r;
  }
};

using Handler = std::function<ServerResponse(const Request&)>;

namespace detail {

inline bool parse_request_head(std::string_view head, Request& out) {
  auto eol = head.find("\r\n");
  auto line = head.substr(0, eol);
  auto sp1 = line.find(' ');
  auto sp2 = line.rfind(' ');
  if (sp1 == std::string_view::npos || sp2 == sp1) return false;
  out.method = std::string(line.substr(0, sp1));
  out.target = std::string(line.substr(sp1 + 1, sp2 - sp1 - 1));
  out.version = std::string(line.substr(sp2 + 1));
  std::string_view rest = eol == std::string_view::npos ? std::string_view{} : head.substr(eol + 2);
  while (!rest.empty()) {
    auto e = rest.find("\r\n");
    auto h = rest.substr(0, e);
    rest = e == std::string_view::npos ? std::string_view{} : rest.substr(e + 2);
    auto colon = h.find(':');
    if (colon == std::string_view::npos) return false;
    auto value = h.substr(colon + 1);
    while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
    while (!value.empty() && value.back() == ' ') value.remove_suffix(1);
    out.headers.emplace_back(std::string(h.substr(0, colon)), std::string(value));
  }
  return true;
}

inline bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN) {
        pollfd p{fd, POLLOUT, 0};
        if (::poll(&p, 1, 5000) <= 0) return false;
        continue;
      }
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

}  // namespace detail

// Minimal threaded HTTP/1.1 server: one request per connection, then close.
class Server {
 public:
  Server(std::string label, const std::string& bind_host, std::uint16_t port, Handler handler)
      : label_(std::move(label)), handler_(std::move(handler)) {
    fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) throw BindFailed(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (inet_pton(AF_INET, bind_host.c_str(), &addr.sin_addr) != 1) {
      ::close(fd_);
      throw BindFailed("bad bind address " + bind_host);
    }
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 128) != 0) {
      std::string err = std::strerror(errno);
      ::close(fd_);
      throw BindFailed("bind " + bind_host + ":" + std::to_string(port) + ": " + err);
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    if (::pipe2(wake_, O_CLOEXEC) != 0) throw BindFailed("pipe");
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  ~Server() { stop(); }

  std::uint16_t port() const { return port_; }
  const std::string& label() const { return label_; }

  void stop() {
    if (stopped_.exchange(true)) return;
    char c = 'x';
    [[maybe_unused]] auto n = ::write(wake_[1], &c, 1);
    if (accept_thread_.joinable()) accept_thread_.join();
    std::list<Worker> workers;
    {
      std::lock_guard lock(workers_mu_);
      workers.swap(workers_);
    }
    for (auto& w : workers) {
      if (w.thread.joinable()) w.thread.join();
    }
    ::close(fd_);
    ::close(wake_[0]);
    ::close(wake_[1]);
  }

 private:
  struct Worker {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };

  void accept_loop() {
    for (;;) {
      pollfd fds[2] = {{fd_, POLLIN, 0}, {wake_[0], POLLIN, 0}};
      int rc = ::poll(fds, 2, 1000);
      if (rc < 0 && errno != EINTR) return;
      if (fds[1].revents != 0) return;
      reap();
      if (rc <= 0 || (fds[0].revents & POLLIN) == 0) continue;
      int client = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
      if (client < 0) continue;
      auto done = std::make_shared<std::atomic<bool>>(false);
      std::lock_guard lock(workers_mu_);
      workers_.push_back(Worker{std::thread([this, client, done] {
                                  serve_connection(client);
                                  done->store(true);
                                }),
                                done});
    }
  }

  void reap() {
    std::lock_guard lock(workers_mu_);
    for (auto it = workers_.begin(); it != workers_.end();) {
      if (it->done->load()) {
        it->thread.join();
        it = workers_.erase(it);
      } else {
        ++it;
      }
    }
  }

  void serve_connection(int client) {
    std::string buffer;
    std::size_t head_end = std::string::npos;
    char chunk[8192];
    auto read_more = [&]() {
      pollfd p{client, POLLIN, 0};
      if (::poll(&p, 1, 5000) <= 0) return false;
      ssize_t n = ::recv(client, chunk, sizeof chunk, 0);
      if (n <= 0) return false;
      buffer.append(chunk, static_cast<std::size_t>(n));
      return true;
    };
    while ((head_end = buffer.find("\r\n\r\n")) == std::string::npos) {
      if (buffer.size() > 64 * 1024 || !read_more()) {
        ::close(client);
        return;
      }
    }
    Request req;
    req.listener = label_;
    if (!detail::parse_request_head(std::string_view(buffer).substr(0, head_end), req)) {
      write_response(client, ServerResponse::text(400, "bad request\n"));
      return;
    }
    buffer.erase(0, head_end + 4);
    if (auto cl = find_header(req.headers, "Content-Length")) {
      std::size_t want = std::stoull(*cl);
      while (buffer.size() < want) {
        if (!read_more()) break;
      }
      req.body = buffer.substr(0, want);
    }

    ServerResponse resp;
    try {
      resp = handler_(req);
    } catch (const std::exception& e) {
      resp = ServerResponse::text(500, std::string(e.what()) + "\n");
    }
    if (resp.close_without_reply) {
      ::shutdown(client, SHUT_WR);
      ::close(client);
      return;
    }
    write_response(client, resp);
  }

  static void write_response(int client, const ServerResponse& resp) {
    std::string out = "HTTP/1.1 " + std::to_string(resp.status) + " " + reason_phrase(resp.status) + "\r\n";
    for (const auto& [k, v] : resp.headers) out += k + ": " + v + "\r\n";
    if (!has_header(resp.headers, "Content-Length")) {
      out += "Content-Length: " + std::to_string(resp.body.size()) + "\r\n";
    }
    out += "Connection: close\r\n\r\n";
    out += resp.body;
    detail::send_all(client, out);
    ::shutdown(client, SHUT_WR);
    // Drain until the peer closes so the kernel does not answer with RST.
    pollfd p{client, POLLIN, 0};
    char sink[1024];
    while (::poll(&p, 1, 200) > 0 && ::recv(client, sink, sizeof sink, 0) > 0) {
    }
    ::close(client);
  }

  std::string label_;
  Handler handler_;
  int fd_ = -1;
  int wake_[2] = {-1, -1};
  std::uint16_t port_ = 0;
  std::atomic<bool> stopped_{false};
  std::thread accept_thread_;
  std::mutex workers_mu_;
  std::list<Worker> workers_;
};

}  // namespace dmaudit::http
