#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/err.h>
#include <openssl/ssl.h>
#include <openssl/x509v3.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dmaudit/uri.hpp"

namespace dmaudit::http {

using std::chrono::milliseconds;
using Clock = std::chrono::steady_clock;
using HeaderList = std::vector<std::pair<std::string, std::string>>;

inline std::optional<std::string> find_header(const HeaderList& headers, std::string_view name) {
  for (const auto& [k, v] : headers) {
    if (iequals(k, name)) return v;
  }
  return std::nullopt;
}

inline bool has_header(const HeaderList& headers, std::string_view name) {
  return find_header(headers, name).has_value();
}

inline std::string reason_phrase(int status) {
  switch (status) {
    case 200: return "OK";
    case 301: return "Moved Permanently";
    case 302: return "Found";
    case 400: return "Bad Request";
    case 401: return "Unauthorized";
    case 403: return "Forbidden";
    case 404: return "Not Found";
    case 405: return "Method Not Allowed";
    case 429: return "Too Many Requests";
    case 500: return "Internal Server Error";
    case 502: return "Bad Gateway";
    case 503: return "Service Unavailable";
    default: return "Status";
  }
}

// Where to actually connect for a URL.
struct Address {
  std::string host;
  std::uint16_t port = 0;
  bool tls = false;
};

// Origin -> address overrides ("https://video.twimg.com" -> 127.0.0.1:8443,
// plain). Requests keep the original Host header.
class EndpointMap {
 public:
  void add(std::string_view origin, Address address) {
    map_[parse_absolute_uri(origin).origin()] = std::move(address);
  }

  // "ORIGIN=HOST:PORT", e.g. "https://video.twimg.com=127.0.0.1:8443".
  // The override always speaks plain HTTP.
  void add_spec(std::string_view spec) {
    auto eq = spec.rfind('=');
    if (eq == std::string_view::npos) throw InvalidUri("endpoint override needs ORIGIN=HOST:PORT");
    auto target = spec.substr(eq + 1);
    auto colon = target.rfind(':');
    if (colon == std::string_view::npos) throw InvalidUri("endpoint override needs HOST:PORT");
    Address a;
    a.host = std::string(target.substr(0, colon));
    a.port = static_cast<std::uint16_t>(std::stoi(std::string(target.substr(colon + 1))));
    add(spec.substr(0, eq), a);
  }

  std::optional<Address> find(const Uri& url) const {
    auto it = map_.find(url.origin());
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  bool empty() const { return map_.empty(); }
  const std::map<std::string, Address>& entries() const { return map_; }

 private:
  std::map<std::string, Address> map_;
};

enum class RedirectPolicy { none, same_origin, any };

struct ClientOptions {
  milliseconds timeout{10000};
  RedirectPolicy redirects = RedirectPolicy::none;
  int max_redirects = 5;
  EndpointMap endpoints;
  bool allow_external = true;
  std::size_t max_body_bytes = std::size_t{1} << 30;
};

enum class Failure { none, empty_reply, timeout, transport };

struct Response {
  std::string version;
  int status = 0;
  std::string reason;
  HeaderList headers;
  std::string body;
  std::optional<std::size_t> declared_length;
  bool truncated = false;  // peer closed before the declared length arrived
};

struct Result {
  Failure failure = Failure::none;
  std::string error;
  Response response;  // meaningful only when ok()
  std::string final_url;
  std::vector<std::string> redirects;
  milliseconds elapsed{0};

  bool ok() const { return failure == Failure::none; }
};

inline bool is_loopback_host(std::string_view host) {
  if (iequals(host, "localhost") || host == "::1") return true;
  in_addr v4{};
  std::string h(host);
  return inet_pton(AF_INET, h.c_str(), &v4) == 1 && (ntohl(v4.s_addr) >> 24) == 127;
}

inline Address connect_address(const Uri& url, const EndpointMap& endpoints) {
  if (auto a = endpoints.find(url)) return *a;
  return Address{url.host(), url.port(), ascii_lower(url.scheme) == "https"};
}

// True when a request for `url` would leave the machine.
inline bool is_external(const Uri& url, const EndpointMap& endpoints) {
  if (ascii_lower(url.scheme) == "file") return false;
  return !is_loopback_host(connect_address(url, endpoints).host);
}

namespace detail {

struct NetFailure {
  Failure kind;
  std::string message;
};

inline int remaining_ms(Clock::time_point deadline) {
  auto left = std::chrono::duration_cast<milliseconds>(deadline - Clock::now()).count();
  return left <= 0 ? 0 : static_cast<int>(left);
}

inline void wait_fd(int fd, short events, Clock::time_point deadline) {
  for (;;) {
    int left = remaining_ms(deadline);
    if (left == 0) throw NetFailure{Failure::timeout, "timed out"};
    pollfd p{fd, events, 0};
    int rc = ::poll(&p, 1, left);
    if (rc > 0) return;
    if (rc == 0) throw NetFailure{Failure::timeout, "timed out"};
    if (errno != EINTR) throw NetFailure{Failure::transport, std::strerror(errno)};
  }
}

inline SSL_CTX* client_tls_context() {
  static SSL_CTX* ctx = [] {
    SSL_CTX* c = SSL_CTX_new(TLS_client_method());
    SSL_CTX_set_default_verify_paths(c);
    SSL_CTX_set_verify(c, SSL_VERIFY_PEER, nullptr);
    return c;
  }();
  return ctx;
}

inline std::string tls_error_text() {
  unsigned long e = ERR_get_error();
  if (e == 0) return "TLS failure";
  char buf[256];
  ERR_error_string_n(e, buf, sizeof buf);
  return buf;
}

// One TCP (optionally TLS) connection with deadline-bounded I/O.
class Connection {
 public:
  Connection(const Address& addr, const std::string& server_name, Clock::time_point deadline) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    std::string port = std::to_string(addr.port);
    int gai = ::getaddrinfo(addr.host.c_str(), port.c_str(), &hints, &res);
    if (gai != 0) throw NetFailure{Failure::transport, "resolve " + addr.host + ": " + gai_strerror(gai)};
    std::unique_ptr<addrinfo, decltype(&freeaddrinfo)> guard(res, &freeaddrinfo);

    std::string last_error = "no addresses";
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
      int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC | SOCK_NONBLOCK, ai->ai_protocol);
      if (fd < 0) {
        last_error = std::strerror(errno);
        continue;
      }
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0 || errno == EINPROGRESS) {
        try {
          wait_fd(fd, POLLOUT, deadline);
        } catch (...) {
          ::close(fd);
          throw;
        }
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        if (err == 0) {
          fd_ = fd;
          break;
        }
        last_error = std::strerror(err);
      } else {
        last_error = std::strerror(errno);
      }
      ::close(fd);
    }
    if (fd_ < 0) throw NetFailure{Failure::transport, "connect " + addr.host + ":" + port + ": " + last_error};
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    if (addr.tls) start_tls(server_name, deadline);
  }

  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  ~Connection() {
    if (ssl_ != nullptr) SSL_free(ssl_);
    if (fd_ >= 0) ::close(fd_);
  }

  void write_all(std::string_view data, Clock::time_point deadline) {
    while (!data.empty()) {
      if (ssl_ != nullptr) {
        int n = SSL_write(ssl_, data.data(), static_cast<int>(data.size()));
        if (n > 0) {
          data.remove_prefix(static_cast<std::size_t>(n));
          continue;
        }
        wait_tls(n, deadline, "TLS write");
        continue;
      }
      ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
      if (n > 0) {
        data.remove_prefix(static_cast<std::size_t>(n));
      } else if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
        wait_fd(fd_, POLLOUT, deadline);
      } else if (n < 0 && errno != EINTR) {
        throw NetFailure{Failure::transport, std::string("send: ") + std::strerror(errno)};
      }
    }
  }

  // Returns 0 on orderly end of stream.
  std::size_t read_some(char* buf, std::size_t cap, Clock::time_point deadline) {
    for (;;) {
      if (ssl_ != nullptr) {
        int n = SSL_read(ssl_, buf, static_cast<int>(cap));
        if (n > 0) return static_cast<std::size_t>(n);
        int err = SSL_get_error(ssl_, n);
        if (err == SSL_ERROR_ZERO_RETURN) return 0;
        if (err == SSL_ERROR_SYSCALL && ERR_peek_error() == 0 && (n == 0 || errno == 0)) return 0;
        wait_tls(n, deadline, "TLS read");
        continue;
      }
      ssize_t n = ::recv(fd_, buf, cap, 0);
      if (n >= 0) return static_cast<std::size_t>(n);
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        wait_fd(fd_, POLLIN, deadline);
      } else if (errno != EINTR) {
        throw NetFailure{Failure::transport, std::string("recv: ") + std::strerror(errno)};
      }
    }
  }

 private:
  void start_tls(const std::string& server_name, Clock::time_point deadline) {
    ssl_ = SSL_new(client_tls_context());
    SSL_set_fd(ssl_, fd_);
    SSL_set_tlsext_host_name(ssl_, server_name.c_str());
    SSL_set1_host(ssl_, server_name.c_str());
    for (;;) {
      int rc = SSL_connect(ssl_);
      if (rc == 1) return;
      wait_tls(rc, deadline, "TLS handshake");
    }
  }

  void wait_tls(int rc, Clock::time_point deadline, const char* what) {
    int err = SSL_get_error(ssl_, rc);
    if (err == SSL_ERROR_WANT_READ) {
      wait_fd(fd_, POLLIN, deadline);
    } else if (err == SSL_ERROR_WANT_WRITE) {
      wait_fd(fd_, POLLOUT, deadline);
    } else {
      throw NetFailure{Failure::transport, std::string(what) + ": " + tls_error_text()};
    }
  }

  int fd_ = -1;
  SSL* ssl_ = nullptr;
};

// Parses "HTTP/1.1 200 OK" plus header lines. `head` excludes the blank line.
inline bool parse_response_head(std::string_view head, Response& out) {
  auto eol = head.find("\r\n");
  std::string_view status_line = head.substr(0, eol);
  auto sp1 = status_line.find(' ');
  if (sp1 == std::string_view::npos || status_line.substr(0, 5) != "HTTP/") return false;
  out.version = std::string(status_line.substr(0, sp1));
  auto code = status_line.substr(sp1 + 1, 3);
  if (code.size() != 3) return false;
  out.status = std::stoi(std::string(code));
  out.reason = sp1 + 5 <= status_line.size() ? std::string(status_line.substr(sp1 + 5)) : "";
  out.headers.clear();
  std::string_view rest = eol == std::string_view::npos ? std::string_view{} : head.substr(eol + 2);
  while (!rest.empty()) {
    auto e = rest.find("\r\n");
    auto line = rest.substr(0, e);
    rest = e == std::string_view::npos ? std::string_view{} : rest.substr(e + 2);
    auto colon = line.find(':');
    if (colon == std::string_view::npos) return false;
    auto value = line.substr(colon + 1);
    while (!value.empty() && (value.front() == ' ' || value.front() == '\t')) value.remove_prefix(1);
    while (!value.empty() && (value.back() == ' ' || value.back() == '\t')) value.remove_suffix(1);
    out.headers.emplace_back(std::string(line.substr(0, colon)), std::string(value));
  }
  return true;
}

class Reader {
 public:
  Reader(Connection& c, Clock::time_point deadline) : conn_(c), deadline_(deadline) {}

  // False on end of stream.
  bool fill() {
    char buf[16384];
    std::size_t n = conn_.read_some(buf, sizeof buf, deadline_);
    if (n == 0) return false;
    total_ += n;
    buffer_.append(buf, n);
    return true;
  }

  std::string& buffer() { return buffer_; }
  std::size_t total() const { return total_; }

 private:
  Connection& conn_;
  Clock::time_point deadline_;
  std::string buffer_;
  std::size_t total_ = 0;
};

inline Response read_response(Connection& conn, Clock::time_point deadline, std::size_t max_body) {
  Reader r(conn, deadline);
  Response resp;
  for (;;) {
    std::size_t head_end;
    while ((head_end = r.buffer().find("\r\n\r\n")) == std::string::npos) {
      if (r.buffer().size() > 256 * 1024) throw NetFailure{Failure::transport, "response head too large"};
      bool more;
      try {
        more = r.fill();
      } catch (const NetFailure& f) {
        if (r.total() == 0 && f.kind == Failure::transport) {
          throw NetFailure{Failure::transport, "connection reset before any response byte: " + f.message};
        }
        throw;
      }
      if (!more) {
        if (r.total() == 0) throw NetFailure{Failure::empty_reply, "empty reply from server"};
        throw NetFailure{Failure::transport, "connection closed inside response head"};
      }
    }
    if (!parse_response_head(std::string_view(r.buffer()).substr(0, head_end), resp)) {
      throw NetFailure{Failure::transport, "malformed response head"};
    }
    r.buffer().erase(0, head_end + 4);
    if (resp.status >= 100 && resp.status < 200) continue;
    break;
  }

  auto te = find_header(resp.headers, "Transfer-Encoding");
  if (te && ascii_lower(*te).find("chunked") != std::string::npos) {
    std::string body;
    for (;;) {
      std::size_t eol;
      while ((eol = r.buffer().find("\r\n")) == std::string::npos) {
        if (!r.fill()) throw NetFailure{Failure::transport, "connection closed inside chunked body"};
      }
      std::size_t size = std::stoul(r.buffer().substr(0, eol), nullptr, 16);
      r.buffer().erase(0, eol + 2);
      if (size == 0) break;
      while (r.buffer().size() < size + 2) {
        if (!r.fill()) throw NetFailure{Failure::transport, "connection closed inside chunk"};
      }
      body.append(r.buffer(), 0, size);
      r.buffer().erase(0, size + 2);
      if (body.size() > max_body) throw NetFailure{Failure::transport, "body exceeds limit"};
    }
    resp.body = std::move(body);
    return resp;
  }

  if (auto cl = find_header(resp.headers, "Content-Length")) {
    resp.declared_length = std::stoull(*cl);
    if (*resp.declared_length > max_body) throw NetFailure{Failure::transport, "body exceeds limit"};
    while (r.buffer().size() < *resp.declared_length) {
      if (!r.fill()) {
        resp.truncated = true;
        break;
      }
    }
    if (r.buffer().size() > *resp.declared_length) r.buffer().resize(*resp.declared_length);
    resp.body = std::move(r.buffer());
    return resp;
  }

  if (resp.status == 204 || resp.status == 304) return resp;
  while (r.fill()) {
    if (r.buffer().size() > max_body) throw NetFailure{Failure::transport, "body exceeds limit"};
  }
  resp.body = std::move(r.buffer());
  return resp;
}

inline bool is_redirect(int status) {
  return status == 301 || status == 302 || status == 303 || status == 307 || status == 308;
}

}  // namespace detail

// One GET per hop. The request carries a Host header (unless the caller
// supplied one) followed by exactly `headers`; nothing else is added.
inline Result get(const Uri& url, const HeaderList& headers, const ClientOptions& opts) {
  auto started = Clock::now();
  auto deadline = started + opts.timeout;
  Result result;
  Uri current = url;
  HeaderList hop_headers = headers;

  auto finish = [&](Result& r) -> Result& {
    r.elapsed = std::chrono::duration_cast<milliseconds>(Clock::now() - started);
    r.final_url = current.str();
    return r;
  };

  for (int hop = 0;; ++hop) {
    auto scheme = ascii_lower(current.scheme);
    if (scheme != "http" && scheme != "https") {
      result.failure = Failure::transport;
      result.error = "unsupported scheme: " + current.scheme;
      return finish(result);
    }
    if (!opts.allow_external && is_external(current, opts.endpoints)) {
      result.failure = Failure::transport;
      result.error = "refusing to contact non-loopback host " + current.host();
      return finish(result);
    }
    try {
      detail::Connection conn(connect_address(current, opts.endpoints), current.host(), deadline);
      std::string request = "GET " + current.request_target() + " HTTP/1.1\r\n";
      if (!has_header(hop_headers, "Host")) request += "Host: " + current.authority.value_or("") + "\r\n";
      for (const auto& [k, v] : hop_headers) request += k + ": " + v + "\r\n";
      request += "\r\n";
      conn.write_all(request, deadline);
      result.response = detail::read_response(conn, deadline, opts.max_body_bytes);
    } catch (const detail::NetFailure& f) {
      result.failure = f.kind;
      result.error = f.message;
      return finish(result);
    } catch (const std::exception& e) {
      result.failure = Failure::transport;
      result.error = e.what();
      return finish(result);
    }

    auto location = find_header(result.response.headers, "Location");
    if (!detail::is_redirect(result.response.status) || !location ||
        opts.redirects == RedirectPolicy::none || hop >= opts.max_redirects) {
      return finish(result);
    }
    Uri next;
    try {
      next = resolve_uri(current, parse_uri(*location));
    } catch (const InvalidUri&) {
      return finish(result);
    }
    bool same_origin = next.origin() == current.origin();
    if (opts.redirects == RedirectPolicy::same_origin && !same_origin) return finish(result);
    if (!same_origin) {
      std::erase_if(hop_headers, [](const auto& h) {
        return iequals(h.first, "Cookie") || iequals(h.first, "Authorization") || iequals(h.first, "Host");
      });
    }
    result.redirects.push_back(current.str());
    current = next;
  }
}

inline Result get(std::string_view url, const HeaderList& headers, const ClientOptions& opts) {
  return get(parse_absolute_uri(url), headers, opts);
}

}  // namespace dmaudit::http
