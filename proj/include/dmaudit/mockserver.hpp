#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmaudit/archive.hpp"
#include "dmaudit/digest.hpp"
#include "dmaudit/http.hpp"
#include "dmaudit/server.hpp"
#include "dmaudit/uri.hpp"

namespace dmaudit::mock {

using nlohmann::json;

enum class SessionPhase { active, closed, expired };

inline std::string to_string(SessionPhase p) {
  switch (p) {
    case SessionPhase::active: return "ACTIVE";
    case SessionPhase::closed: return "CLOSED";
    case SessionPhase::expired: return "EXPIRED";
  }
  return "ACTIVE";
}

inline SessionPhase phase_from_string(std::string_view s) {
  if (s == "ACTIVE") return SessionPhase::active;
  if (s == "CLOSED") return SessionPhase::closed;
  if (s == "EXPIRED") return SessionPhase::expired;
  throw std::invalid_argument("unknown session phase \"" + std::string(s) + "\"");
}

// Allowed moves: ACTIVE -> CLOSED -> EXPIRED, and CLOSED -> ACTIVE (reopen).
inline bool phase_transition_allowed(SessionPhase from, SessionPhase to) {
  if (from == to) return true;
  if (from == SessionPhase::active) return to == SessionPhase::closed;
  if (from == SessionPhase::closed) return to == SessionPhase::expired || to == SessionPhase::active;
  return false;
}

struct SessionState {
  std::string session_id;
  std::set<std::string> parties;
  SessionPhase phase = SessionPhase::active;
  std::map<std::string, std::string> cookie_tokens;  // account -> token
};

struct ImageRoute {
  std::string path;
  std::string body;
  std::string session;
  std::string content_type = "image/jpeg";
};

struct VideoRoute {
  std::string path;
  std::string body;
  bool plain_http_allowed = true;
  std::string content_type = "video/mp4";
};

struct PlaylistRoute {
  std::string path;
  std::string text;
  bool plain_http_allowed = true;
};

struct Capture {
  std::string timestamp;
  std::string original;
  std::string body;
  std::string mimetype = "video/mp4";
  int status = 200;
};

struct ScenarioConfig {
  std::vector<SessionState> sessions;
  std::vector<ImageRoute> image_routes;
  std::vector<VideoRoute> video_routes;
  std::vector<PlaylistRoute> playlist_routes;
  std::vector<Capture> archive_store;
  std::string cdx_lines;
  std::string sts_header_value = "max-age=631138519";
  std::string csp_header_value;
  std::string clock = "20221208194342";
  int clock_step_seconds = 0;
  bool plain_listener = true;
  std::size_t cdx_page_size = 0;  // 0: no pagination
};

inline void validate(const ScenarioConfig& c) {
  std::set<std::string> ids, tokens;
  for (const auto& s : c.sessions) {
    if (!ids.insert(s.session_id).second) throw std::invalid_argument("duplicate session " + s.session_id);
    for (const auto& [account, token] : s.cookie_tokens) {
      if (s.parties.count(account) == 0) {
        throw std::invalid_argument("session " + s.session_id + ": token for non-party " + account);
      }
      if (!tokens.insert(token).second) throw std::invalid_argument("cookie token reused: " + token);
    }
  }
  for (const auto& r : c.image_routes) {
    if (ids.count(r.session) == 0) throw std::invalid_argument("image route " + r.path + " names unknown session " + r.session);
  }
  if (!is_valid_timestamp(c.clock)) throw std::invalid_argument("bad clock " + c.clock);
  for (const auto& cap : c.archive_store) {
    if (!is_valid_timestamp(cap.timestamp)) throw std::invalid_argument("bad capture timestamp " + cap.timestamp);
  }
}

// Deterministic pseudo-random bytes (splitmix64 stream).
inline std::string generate_blob(std::size_t length, std::uint64_t seed) {
  std::string out(length, '\0');
  std::uint64_t state = seed;
  for (std::size_t i = 0; i < length; i += 8) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    for (std::size_t b = 0; b < 8 && i + b < length; ++b) out[i + b] = static_cast<char>((z >> (8 * b)) & 0xff);
  }
  return out;
}

namespace detail {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// {"text": ...} | {"generate": {"length": n, "seed": s}} | {"file": path}
inline std::string body_from_json(const json& j, const std::filesystem::path& base_dir) {
  if (j.is_string()) return j.get<std::string>();
  if (j.contains("text")) return j.at("text").get<std::string>();
  if (j.contains("generate")) {
    const auto& g = j.at("generate");
    return generate_blob(g.at("length").get<std::size_t>(), g.value("seed", std::uint64_t{0}));
  }
  if (j.contains("file")) return read_file(base_dir / j.at("file").get<std::string>());
  throw std::invalid_argument("body needs text, generate or file");
}

}  // namespace detail

inline ScenarioConfig scenario_from_json(const json& j, const std::filesystem::path& base_dir = ".") {
  ScenarioConfig c;
  for (const auto& s : j.value("sessions", json::array())) {
    SessionState st;
    st.session_id = s.at("id").get<std::string>();
    for (const auto& p : s.value("parties", json::array())) st.parties.insert(p.get<std::string>());
    st.phase = phase_from_string(s.value("phase", std::string("ACTIVE")));
    json tokens = s.value("cookie_tokens", json::object());
    for (const auto& [k, v] : tokens.items()) st.cookie_tokens[k] = v.get<std::string>();
    c.sessions.push_back(std::move(st));
  }
  for (const auto& r : j.value("image_routes", json::array())) {
    c.image_routes.push_back({r.at("path").get<std::string>(), detail::body_from_json(r.at("body"), base_dir),
                              r.at("session").get<std::string>(), r.value("content_type", std::string("image/jpeg"))});
  }
  for (const auto& r : j.value("video_routes", json::array())) {
    c.video_routes.push_back({r.at("path").get<std::string>(), detail::body_from_json(r.at("body"), base_dir),
                              r.value("plain_http_allowed", true), r.value("content_type", std::string("video/mp4"))});
  }
  for (const auto& r : j.value("playlist_routes", json::array())) {
    c.playlist_routes.push_back({r.at("path").get<std::string>(), detail::body_from_json(r.at("body"), base_dir),
                                 r.value("plain_http_allowed", true)});
  }
  for (const auto& a : j.value("archive_store", json::array())) {
    c.archive_store.push_back({a.at("timestamp").get<std::string>(), a.at("original").get<std::string>(),
                               detail::body_from_json(a.at("body"), base_dir), a.value("mimetype", std::string("video/mp4")),
                               a.value("status", 200)});
  }
  if (j.contains("cdx_lines")) c.cdx_lines = j.at("cdx_lines").get<std::string>();
  if (j.contains("cdx_file")) c.cdx_lines += detail::read_file(base_dir / j.at("cdx_file").get<std::string>());
  c.sts_header_value = j.value("sts_header_value", c.sts_header_value);
  c.csp_header_value = j.value("csp_header_value", c.csp_header_value);
  c.clock = j.value("clock", c.clock);
  c.clock_step_seconds = j.value("clock_step_seconds", 0);
  c.plain_listener = j.value("plain_listener", true);
  c.cdx_page_size = j.value("cdx_page_size", std::size_t{0});
  validate(c);
  return c;
}

// Capture clock: only moves forward.
class MockClock {
 public:
  explicit MockClock(const std::string& start) : now_(parse_timestamp(start)) {}

  std::string now() const { return format_timestamp(now_); }

  void set(const std::string& ts) {
    auto t = parse_timestamp(ts);
    if (t < now_) throw std::invalid_argument("mock clock is monotonic; " + ts + " < " + now());
    now_ = t;
  }

  void advance(std::chrono::seconds s) {
    if (s.count() < 0) throw std::invalid_argument("mock clock cannot go backwards");
    now_ += s;
  }

 private:
  std::chrono::system_clock::time_point now_;
};

// How a request's Cookie header relates to an image route's session.
enum class CookieClass { none, party, non_party, unrecognized };

inline std::string to_string(CookieClass c) {
  switch (c) {
    case CookieClass::none: return "none";
    case CookieClass::party: return "party";
    case CookieClass::non_party: return "non_party";
    case CookieClass::unrecognized: return "unrecognized";
  }
  return "none";
}

enum class ImageDecision { ok, unauthorized, not_found, empty_reply };

// The image protection rules: no cookie -> 401; a cookie from an expired
// session -> connection closed without a reply; a cookie of an account
// outside the route's session, a missing Referer, or a closed session -> 404.
inline ImageDecision image_decision(CookieClass cookie, bool has_referer, SessionPhase cookie_session_phase) {
  if (cookie == CookieClass::none) return ImageDecision::unauthorized;
  if (cookie == CookieClass::unrecognized) return ImageDecision::not_found;
  if (cookie_session_phase == SessionPhase::expired) return ImageDecision::empty_reply;
  if (cookie == CookieClass::non_party) return ImageDecision::not_found;
  if (!has_referer) return ImageDecision::not_found;
  if (cookie_session_phase != SessionPhase::active) return ImageDecision::not_found;
  return ImageDecision::ok;
}

struct TraceEntry {
  std::size_t seq = 0;
  std::string listener;
  std::string method;
  std::string target;
  http::HeaderList headers;
  int status = 0;  // 0 when closed without reply
};

inline constexpr const char* kHttpsRole = "https-role";
inline constexpr const char* kHttpRole = "http-role";

// Offline stand-in for the media hosts and the web archive. Two plain-HTTP
// listeners play the "https" and "http" roles; clients reach them through
// an EndpointMap instead of real TLS.
class MockServer {
 public:
  explicit MockServer(ScenarioConfig config, const std::string& bind = "127.0.0.1", std::uint16_t https_port = 0,
                      std::uint16_t http_port = 0)
      : config_(std::move(config)), clock_(config_.clock) {
    validate(config_);
    std::string_view rest = config_.cdx_lines;
    while (!rest.empty()) {
      auto nl = rest.find('\n');
      auto line = rest.substr(0, nl);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (!line.empty()) cdx_index_.emplace_back(line);
      rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    }
    for (const auto& cap : config_.archive_store) index_capture(cap);

    https_ = std::make_unique<http::Server>(kHttpsRole, bind, https_port,
                                            [this](const http::Request& r) { return handle(r); });
    if (config_.plain_listener) {
      http_ = std::make_unique<http::Server>(kHttpRole, bind, http_port,
                                             [this](const http::Request& r) { return handle(r); });
    }
    bind_host_ = bind;
  }

  ~MockServer() { stop(); }

  void stop() {
    if (https_) https_->stop();
    if (http_) http_->stop();
  }

  std::uint16_t https_port() const { return https_->port(); }
  std::optional<std::uint16_t> http_port() const {
    return http_ ? std::optional<std::uint16_t>(http_->port()) : std::nullopt;
  }

  // Base URL for talking to the https-role listener directly.
  std::string base_url() const { return "http://" + bind_host_ + ":" + std::to_string(https_port()); }

  // Routes https://<host> to the https-role listener and http://<host> to the
  // http-role listener (or to a closed port when the plain listener is off).
  http::EndpointMap endpoints(const std::vector<std::string>& hosts) const {
    http::EndpointMap m;
    for (const auto& h : hosts) {
      m.add("https://" + h, {bind_host_, https_port(), false});
      m.add("http://" + h, {bind_host_, http_port().value_or(closed_port()), false});
    }
    return m;
  }

  std::vector<TraceEntry> trace() const {
    std::lock_guard lock(trace_mu_);
    return trace_;
  }

  void clear_trace() {
    std::lock_guard lock(trace_mu_);
    trace_.clear();
  }

  SessionPhase phase(const std::string& session) const {
    std::shared_lock lock(state_mu_);
    return find_session(session).phase;
  }

  void set_phase(const std::string& session, SessionPhase to) {
    std::unique_lock lock(state_mu_);
    auto& s = find_session(session);
    if (!phase_transition_allowed(s.phase, to)) {
      throw std::invalid_argument("session " + session + ": " + to_string(s.phase) + " -> " + to_string(to) +
                                  " not allowed");
    }
    s.phase = to;
  }

  std::string clock_now() const {
    std::shared_lock lock(state_mu_);
    return clock_.now();
  }

  void set_clock(const std::string& ts) {
    std::unique_lock lock(state_mu_);
    clock_.set(ts);
  }

  void put_video_route(const std::string& path, std::string body, bool plain_http_allowed = true) {
    std::unique_lock lock(state_mu_);
    for (auto& r : config_.video_routes) {
      if (r.path == path) {
        r.body = std::move(body);
        r.plain_http_allowed = plain_http_allowed;
        return;
      }
    }
    config_.video_routes.push_back({path, std::move(body), plain_http_allowed, "video/mp4"});
  }

  bool remove_route(const std::string& path) {
    std::unique_lock lock(state_mu_);
    auto before = config_.video_routes.size() + config_.playlist_routes.size() + config_.image_routes.size();
    std::erase_if(config_.video_routes, [&](const auto& r) { return r.path == path; });
    std::erase_if(config_.playlist_routes, [&](const auto& r) { return r.path == path; });
    std::erase_if(config_.image_routes, [&](const auto& r) { return r.path == path; });
    return before != config_.video_routes.size() + config_.playlist_routes.size() + config_.image_routes.size();
  }

  std::optional<Capture> capture(const std::string& timestamp, const std::string& original) const {
    std::shared_lock lock(state_mu_);
    auto it = captures_.find({original, timestamp});
    if (it == captures_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<Capture> captures() const {
    std::shared_lock lock(state_mu_);
    std::vector<Capture> out;
    for (const auto& [k, v] : captures_) out.push_back(v);
    return out;
  }

  // Adds or replaces a capture and indexes it.
  void put_capture(Capture c) {
    std::unique_lock lock(state_mu_);
    index_capture(c);
  }

  // Flips one byte of a stored capture in place; length is preserved.
  void corrupt_capture(const std::string& timestamp, const std::string& original, std::size_t offset) {
    std::unique_lock lock(state_mu_);
    auto it = captures_.find({original, timestamp});
    if (it == captures_.end() || offset >= it->second.body.size()) throw std::out_of_range("no such capture byte");
    it->second.body[offset] = static_cast<char>(it->second.body[offset] ^ 0xff);
  }

  bool drop_capture(const std::string& timestamp, const std::string& original) {
    std::unique_lock lock(state_mu_);
    bool erased = captures_.erase({original, timestamp}) > 0;
    std::erase_if(cdx_index_, [&](const std::string& line) {
      auto p = parse_cdx(line);
      return !p.records.empty() && p.records[0].timestamp == timestamp && p.records[0].original == original;
    });
    return erased;
  }

  // The next `count` save requests answer `status` (e.g. 429).
  void set_save_fault(int status, std::optional<int> retry_after, int count) {
    std::unique_lock lock(state_mu_);
    save_fault_ = SaveFault{status, retry_after, count};
  }

  json sessions_json() const {
    std::shared_lock lock(state_mu_);
    json out = json::array();
    for (const auto& s : config_.sessions) {
      out.push_back({{"id", s.session_id},
                     {"parties", s.parties},
                     {"phase", to_string(s.phase)},
                     {"cookie_tokens", s.cookie_tokens}});
    }
    return out;
  }

  json trace_json() const {
    json out = json::array();
    for (const auto& t : trace()) {
      json headers = json::array();
      for (const auto& [k, v] : t.headers) headers.push_back({k, v});
      out.push_back({{"seq", t.seq},
                     {"listener", t.listener},
                     {"method", t.method},
                     {"target", t.target},
                     {"headers", headers},
                     {"status", t.status}});
    }
    return out;
  }

 private:
  struct SaveFault {
    int status = 0;
    std::optional<int> retry_after;
    int remaining = 0;
  };

  static std::uint16_t closed_port() { return 9; }  // discard; nothing listens

  SessionState& find_session(const std::string& id) {
    for (auto& s : config_.sessions) {
      if (s.session_id == id) return s;
    }
    throw std::invalid_argument("unknown session " + id);
  }
  const SessionState& find_session(const std::string& id) const {
    return const_cast<MockServer*>(this)->find_session(id);
  }

  static std::string urlkey_for(const std::string& original) {
    Uri u = parse_uri(original);
    std::string host = u.host();
    std::vector<std::string> labels;
    std::string_view h = host;
    while (!h.empty()) {
      auto dot = h.find('.');
      labels.emplace_back(h.substr(0, dot));
      if (dot == std::string_view::npos) break;
      h.remove_prefix(dot + 1);
    }
    if (!labels.empty() && labels.front() == "www") labels.erase(labels.begin());
    std::string key;
    for (auto it = labels.rbegin(); it != labels.rend(); ++it) key += (key.empty() ? "" : ",") + *it;
    key += ")" + ascii_lower(u.request_target());
    return key;
  }

  void index_capture(const Capture& c) {
    captures_[{c.original, c.timestamp}] = c;
    Hasher sha1("sha1");
    sha1.update(c.body);
    std::string digest = base32(sha1.finish_raw());
    while (!digest.empty() && digest.back() == '=') digest.pop_back();
    cdx_index_.push_back(format_cdx_line(CdxRecord{urlkey_for(c.original), c.timestamp, c.original, c.mimetype,
                                                   std::to_string(c.status), digest, std::to_string(c.body.size())}));
  }

  void record(const http::Request& r, int status) {
    if (r.path().rfind("/admin/", 0) == 0 || r.path() == "/healthz") return;
    std::lock_guard lock(trace_mu_);
    trace_.push_back({trace_.size(), r.listener, r.method, r.target, r.headers, status});
  }

  http::HeaderList filler_headers() const {
    return {{"perf", "7626143928"},
            {"server", "tsa_b"},
            {"x-content-type-options", "nosniff"},
            {"timing-allow-origin", "https://twitter.com, https://mobile.twitter.com"},
            {"strict-transport-security", config_.sts_header_value}};
  }

  static std::string strip_scheme(std::string_view s) {
    for (std::string_view p : {"https://", "http://"}) {
      if (s.size() >= p.size() && iequals(s.substr(0, p.size()), p)) return ascii_lower(s.substr(p.size()));
    }
    return ascii_lower(s);
  }

  http::ServerResponse handle(const http::Request& req) {
    http::ServerResponse resp = dispatch(req);
    record(req, resp.close_without_reply ? 0 : resp.status);
    return resp;
  }

  http::ServerResponse dispatch(const http::Request& req) {
    const std::string path = req.path();
    if (path == "/healthz") return http::ServerResponse::text(200, "ok\n");
    if (path.rfind("/admin/", 0) == 0) return admin(req);
    if (path.rfind("/save/", 0) == 0) return save(req);
    if (path.rfind("/web/", 0) == 0) return replay(req);
    if (path == "/cdx/search/cdx") return cdx(req);
    if (req.method != "GET") return http::ServerResponse::text(405, "GET only\n");
    return live(req);
  }

  http::ServerResponse redirect_to_https(const http::Request& req) const {
    http::ServerResponse r;
    r.status = 301;
    auto host = http::find_header(req.headers, "Host").value_or("localhost");
    r.headers.emplace_back("Location", "https://" + host + req.target);
    return r;
  }

  http::ServerResponse live(const http::Request& req) {
    std::shared_lock lock(state_mu_);
    const std::string path = req.path();
    bool plain = req.listener == kHttpRole;

    if (path == "/") {
      auto r = http::ServerResponse::text(200, "<!doctype html><title>mock</title>\n", "text/html");
      r.headers.insert(r.headers.end(), {{"strict-transport-security", config_.sts_header_value}});
      if (!config_.csp_header_value.empty()) r.headers.emplace_back("content-security-policy", config_.csp_header_value);
      return r;
    }
    for (const auto& route : config_.playlist_routes) {
      if (route.path != path) continue;
      if (plain && !route.plain_http_allowed) return redirect_to_https(req);
      http::ServerResponse r;
      r.headers = filler_headers();
      r.headers.emplace_back("content-type", "application/x-mpegURL");
      r.headers.emplace_back("cache-control", "max-age=604800, must-revalidate");
      r.body = route.text;
      return r;
    }
    for (const auto& route : config_.video_routes) {
      if (route.path != path) continue;
      if (plain && !route.plain_http_allowed) return redirect_to_https(req);
      http::ServerResponse r;
      r.headers = filler_headers();
      r.headers.emplace_back("content-type", route.content_type);
      r.headers.emplace_back("access-control-allow-origin", "*");
      r.body = route.body;
      return r;
    }
    for (const auto& route : config_.image_routes) {
      if (route.path != path) continue;
      if (plain) return redirect_to_https(req);
      return image(req, route);
    }
    return http::ServerResponse::text(404, "not found\n");
  }

  // Caller holds state_mu_ (shared).
  http::ServerResponse image(const http::Request& req, const ImageRoute& route) const {
    CookieClass cls = CookieClass::none;
    SessionPhase phase = SessionPhase::active;
    if (auto cookie = http::find_header(req.headers, "Cookie")) {
      cls = CookieClass::unrecognized;
      std::string_view rest = *cookie;
      const SessionState& owner = find_session(route.session);
      while (!rest.empty() && cls == CookieClass::unrecognized) {
        auto semi = rest.find(';');
        auto pair = dmaudit::detail::trim(rest.substr(0, semi));
        rest = semi == std::string_view::npos ? std::string_view{} : rest.substr(semi + 1);
        auto eq = pair.find('=');
        auto value = eq == std::string_view::npos ? pair : pair.substr(eq + 1);
        for (const auto& s : config_.sessions) {
          for (const auto& [account, token] : s.cookie_tokens) {
            if (token == value) {
              cls = owner.parties.count(account) != 0 ? CookieClass::party : CookieClass::non_party;
              phase = s.phase;
            }
          }
        }
      }
    }
    bool referer = http::has_header(req.headers, "Referer") && !http::find_header(req.headers, "Referer")->empty();

    http::ServerResponse r;
    switch (image_decision(cls, referer, phase)) {
      case ImageDecision::empty_reply:
        r.close_without_reply = true;
        return r;
      case ImageDecision::unauthorized:
        r.status = 401;
        r.headers = filler_headers();
        for (const char* name : {"guest_id_marketing", "guest_id_ads", "personalization_id", "guest_id"}) {
          r.headers.emplace_back("set-cookie", std::string(name) +
                                                   "=v1%3A167051518741457080; Max-Age=63072000; Path=/; "
                                                   "Domain=.twitter.com; Secure; SameSite=None");
        }
        r.headers.emplace_back("cache-control", "no-cache");
        return r;
      case ImageDecision::not_found:
        r.status = 404;
        r.headers = filler_headers();
        r.headers.emplace_back("cache-control", "no-cache");
        return r;
      case ImageDecision::ok:
        r.headers = filler_headers();
        r.headers.emplace_back("content-type", route.content_type);
        r.body = route.body;
        return r;
    }
    return r;
  }

  http::ServerResponse save(const http::Request& req) {
    std::unique_lock lock(state_mu_);
    if (save_fault_.remaining > 0) {
      --save_fault_.remaining;
      auto r = http::ServerResponse::text(save_fault_.status, "save refused\n");
      if (save_fault_.retry_after) r.headers.emplace_back("Retry-After", std::to_string(*save_fault_.retry_after));
      return r;
    }
    std::string original = req.target.substr(std::string("/save/").size());
    Uri target;
    try {
      target = parse_absolute_uri(original);
    } catch (const InvalidUri&) {
      return http::ServerResponse::text(400, "bad url\n");
    }
    const std::string path = target.path;
    Capture cap;
    cap.original = original;
    cap.timestamp = clock_.now();
    bool found = false;
    for (const auto& r : config_.video_routes) {
      if (r.path == path) {
        cap.body = r.body;
        cap.mimetype = r.content_type;
        found = true;
      }
    }
    for (const auto& r : config_.playlist_routes) {
      if (r.path == path) {
        cap.body = r.text;
        cap.mimetype = "application/x-mpegURL";
        found = true;
      }
    }
    for (const auto& r : config_.image_routes) {
      if (r.path == path) {
        cap.status = 401;
        cap.mimetype = "text/html";
        found = true;
      }
    }
    if (!found) return http::ServerResponse::text(404, "live fetch of " + original + " failed\n");
    index_capture(cap);
    clock_.advance(std::chrono::seconds{config_.clock_step_seconds});
    auto r = http::ServerResponse::text(200, "saved " + original + "\n");
    r.headers.emplace_back("Content-Location", "/web/" + cap.timestamp + "/" + original);
    return r;
  }

  http::ServerResponse replay(const http::Request& req) {
    std::shared_lock lock(state_mu_);
    auto snap = parse_replay_url(req.target, "");
    if (!snap) return http::ServerResponse::text(400, "bad replay url\n");
    auto it = captures_.find({snap->original, snap->timestamp});
    if (it == captures_.end()) {
      std::vector<std::string> stamps;
      for (const auto& [key, cap] : captures_) {
        if (key.first == snap->original) stamps.push_back(key.second);
      }
      if (stamps.empty()) return http::ServerResponse::text(404, "not in archive\n");
      auto nearest = select_capture(stamps, CaptureSelection::nearest_after, snap->timestamp);
      http::ServerResponse r;
      r.status = 302;
      r.headers.emplace_back("Location", to_replay_url(SnapshotRef{*nearest, snap->original, snap->raw}, ""));
      return r;
    }
    http::ServerResponse r;
    r.status = it->second.status;
    r.headers.emplace_back("content-type", it->second.mimetype);
    r.headers.emplace_back("memento-datetime", it->second.timestamp);
    if (!snap->raw) r.headers.emplace_back("x-archive-src", "mock");
    r.body = it->second.body;
    return r;
  }

  http::ServerResponse cdx(const http::Request& req) {
    std::shared_lock lock(state_mu_);
    auto q = req.query();
    auto url = query_param(q, "url");
    if (!url || url->empty()) return http::ServerResponse::text(400, "url parameter required\n");
    std::string match = query_param(q, "matchType").value_or("exact");
    bool resume_keys = query_param(q, "showResumeKey").value_or("") == "true";
    std::size_t offset = 0;
    if (auto key = query_param(q, "resumeKey"); key && key->size() > 1 && (*key)[0] == 'o') {
      offset = std::stoul(key->substr(1));
    }
    std::string wanted = strip_scheme(*url);

    std::vector<const std::string*> hits;
    for (const auto& line : cdx_index_) {
      std::vector<std::string_view> fields;
      std::string_view rest = line;
      while (!rest.empty() && fields.size() < 3) {
        auto sp = rest.find(' ');
        fields.push_back(rest.substr(0, sp));
        if (sp == std::string_view::npos) break;
        rest.remove_prefix(sp + 1);
      }
      bool hit;
      if (fields.size() < 3) {
        hit = match == "prefix" && ascii_lower(line).find(wanted) != std::string::npos;
      } else {
        std::string original = strip_scheme(fields[2]);
        hit = match == "prefix" ? original.rfind(wanted, 0) == 0 : original == wanted;
      }
      if (hit) hits.push_back(&line);
    }

    std::size_t end = hits.size();
    bool paged = resume_keys && config_.cdx_page_size > 0;
    if (paged) end = std::min(hits.size(), offset + config_.cdx_page_size);
    std::string body;
    for (std::size_t i = std::min(offset, hits.size()); i < end; ++i) body += *hits[i] + "\n";
    if (paged && end < hits.size()) body += "\no" + std::to_string(end) + "\n";
    return http::ServerResponse::text(200, body);
  }

  http::ServerResponse admin(const http::Request& req) {
    const std::string path = req.path();
    auto ok = [](const json& j) { return http::ServerResponse::text(200, j.dump() + "\n", "application/json"); };
    auto body_json = [&]() { return req.body.empty() ? json::object() : json::parse(req.body); };
    try {
      if (path == "/admin/trace") return ok(trace_json());
      if (path == "/admin/trace/clear") {
        clear_trace();
        return ok({{"cleared", true}});
      }
      if (path == "/admin/sessions") return ok(sessions_json());
      if (path == "/admin/clock") {
        if (req.method == "POST") {
          auto j = body_json();
          std::unique_lock lock(state_mu_);
          if (j.contains("timestamp")) clock_.set(j.at("timestamp").get<std::string>());
          if (j.contains("advance_seconds")) clock_.advance(std::chrono::seconds{j.at("advance_seconds").get<int>()});
        }
        return ok({{"timestamp", clock_now()}});
      }
      if (path.rfind("/admin/session/", 0) == 0 && path.size() > 21 && path.substr(path.size() - 6) == "/phase") {
        std::string id = path.substr(15, path.size() - 15 - 6);
        if (req.method == "POST") {
          std::string wanted = req.body;
          if (!wanted.empty() && wanted.front() == '{') wanted = json::parse(wanted).at("phase").get<std::string>();
          set_phase(id, phase_from_string(dmaudit::detail::trim(wanted)));
        }
        return ok({{"session", id}, {"phase", to_string(phase(id))}});
      }
      if (path == "/admin/route/remove" && req.method == "POST") {
        return ok({{"removed", remove_route(body_json().at("path").get<std::string>())}});
      }
      if (path == "/admin/route/put" && req.method == "POST") {
        auto j = body_json();
        put_video_route(j.at("path").get<std::string>(), detail::body_from_json(j.at("body"), "."),
                        j.value("plain_http_allowed", true));
        return ok({{"stored", true}});
      }
      if (path == "/admin/archive/fault" && req.method == "POST") {
        auto j = body_json();
        std::optional<int> retry;
        if (j.contains("retry_after")) retry = j.at("retry_after").get<int>();
        set_save_fault(j.value("status", 429), retry, j.value("count", 1));
        return ok({{"armed", true}});
      }
      if (path == "/admin/archive/corrupt" && req.method == "POST") {
        auto j = body_json();
        corrupt_capture(j.at("timestamp").get<std::string>(), j.at("original").get<std::string>(),
                        j.value("offset", std::size_t{0}));
        return ok({{"corrupted", true}});
      }
    } catch (const std::exception& e) {
      return http::ServerResponse::text(400, std::string(e.what()) + "\n");
    }
    return http::ServerResponse::text(404, "unknown admin endpoint\n");
  }

  ScenarioConfig config_;
  MockClock clock_;
  mutable std::shared_mutex state_mu_;
  std::map<std::pair<std::string, std::string>, Capture> captures_;  // (original, timestamp)
  std::vector<std::string> cdx_index_;
  SaveFault save_fault_;
  mutable std::mutex trace_mu_;
  std::vector<TraceEntry> trace_;
  std::string bind_host_;
  std::unique_ptr<http::Server> https_;
  std::unique_ptr<http::Server> http_;
};

}  // namespace dmaudit::mock
