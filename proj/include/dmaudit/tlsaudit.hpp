#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dmaudit/error.hpp"
#include "dmaudit/playlist.hpp"
#include "dmaudit/probe.hpp"
#include "dmaudit/uri.hpp"

namespace dmaudit {

struct StsPolicy {
  std::int64_t max_age = 0;  // 0 removes the policy
  bool include_subdomains = false;
  bool preload = false;
  std::string raw;

  bool active() const { return max_age > 0; }
};

// Strict-Transport-Security directives, case-insensitive; unknown ones ignored.
inline StsPolicy parse_sts(std::string_view header_value) {
  StsPolicy p;
  p.raw = std::string(header_value);
  bool saw_max_age = false;
  std::string_view rest = header_value;
  while (!rest.empty()) {
    auto semi = rest.find(';');
    auto directive = detail::trim(rest.substr(0, semi));
    rest = semi == std::string_view::npos ? std::string_view{} : rest.substr(semi + 1);
    if (directive.empty()) continue;
    auto eq = directive.find('=');
    auto name = ascii_lower(detail::trim(directive.substr(0, eq)));
    std::string_view value = eq == std::string_view::npos ? std::string_view{} : detail::trim(directive.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (name == "max-age") {
      auto v = detail::parse_int<std::int64_t>(value);
      if (!v || *v < 0) throw MalformedSts("max-age is not a non-negative integer: \"" + std::string(value) + "\"");
      p.max_age = *v;
      saw_max_age = true;
    } else if (name == "includesubdomains") {
      p.include_subdomains = true;
    } else if (name == "preload") {
      p.preload = true;
    }
  }
  if (!saw_max_age) throw MalformedSts("max-age directive missing");
  return p;
}

struct PreloadEntry {
  std::string domain;
  bool include_subdomains = false;
};

// Local snapshot of a preload list: one domain per line, optionally followed
// by "include_subdomains". '#' starts a comment.
inline std::vector<PreloadEntry> parse_preload_snapshot(std::string_view text) {
  std::vector<PreloadEntry> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string domain, flag;
    if (!(fields >> domain)) continue;
    fields >> flag;
    while (!domain.empty() && domain.back() == '.') domain.pop_back();
    out.push_back({ascii_lower(domain), ascii_lower(flag) == "include_subdomains"});
  }
  return out;
}

inline std::vector<PreloadEntry> load_preload_snapshot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open preload snapshot " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_preload_snapshot(ss.str());
}

struct PreloadStatus {
  bool host_listed = false;
  std::optional<std::string> matched_parent;
};

// Exact entry match, or the nearest parent listed with include_subdomains.
inline PreloadStatus preload_status(std::string_view host, const std::vector<PreloadEntry>& snapshot) {
  std::string h = ascii_lower(host);
  while (!h.empty() && h.back() == '.') h.pop_back();
  for (const auto& e : snapshot) {
    if (e.domain == h) return {true, std::nullopt};
  }
  std::string_view candidate = h;
  for (auto dot = candidate.find('.'); dot != std::string_view::npos; dot = candidate.find('.')) {
    candidate.remove_prefix(dot + 1);
    for (const auto& e : snapshot) {
      if (e.include_subdomains && e.domain == candidate) return {true, std::string(candidate)};
    }
  }
  return {};
}

// One connect-src source expression.
struct CspSource {
  enum class Kind { any, none, self, scheme, host, other_keyword } kind = Kind::host;
  std::string scheme;  // lowercased, without ':'; empty when the source has none
  std::string host;    // lowercased; may start with "*."
  std::optional<std::string> port;  // digits or "*"
  std::string path;
  std::string text;
};

struct CspConnectSrc {
  std::vector<CspSource> sources;
};

inline CspSource parse_csp_source(std::string_view token) {
  CspSource s;
  s.text = std::string(token);
  std::string lower = ascii_lower(token);
  if (lower == "*") {
    s.kind = CspSource::Kind::any;
    return s;
  }
  if (lower == "'none'") {
    s.kind = CspSource::Kind::none;
    return s;
  }
  if (lower == "'self'") {
    s.kind = CspSource::Kind::self;
    return s;
  }
  if (!lower.empty() && lower.front() == '\'') {
    s.kind = CspSource::Kind::other_keyword;
    return s;
  }
  std::string_view rest = lower;
  auto colon = rest.find(':');
  if (colon != std::string_view::npos && colon + 1 == rest.size()) {
    s.kind = CspSource::Kind::scheme;
    s.scheme = std::string(rest.substr(0, colon));
    return s;
  }
  if (auto sep = rest.find("://"); sep != std::string_view::npos) {
    s.scheme = std::string(rest.substr(0, sep));
    rest.remove_prefix(sep + 3);
  }
  auto path_start = rest.find('/');
  if (path_start != std::string_view::npos) {
    s.path = std::string(token.substr(token.size() - (rest.size() - path_start)));
    rest = rest.substr(0, path_start);
  }
  if (auto pc = rest.rfind(':'); pc != std::string_view::npos) {
    s.port = std::string(rest.substr(pc + 1));
    rest = rest.substr(0, pc);
  }
  s.host = std::string(rest);
  s.kind = CspSource::Kind::host;
  return s;
}

inline CspConnectSrc parse_csp_source_list(std::string_view list) {
  CspConnectSrc out;
  std::istringstream tokens{std::string(list)};
  std::string t;
  while (tokens >> t) out.sources.push_back(parse_csp_source(t));
  return out;
}

// Reads the connect-src directive out of a policy. Text without any
// directive name is taken as a bare source list. Returns nullopt for a
// policy that has directives but no connect-src.
inline std::optional<CspConnectSrc> parse_csp_connect_src(std::string_view policy) {
  bool has_directives = false;
  std::string_view rest = policy;
  while (!rest.empty()) {
    auto semi = rest.find(';');
    auto directive = detail::trim(rest.substr(0, semi));
    rest = semi == std::string_view::npos ? std::string_view{} : rest.substr(semi + 1);
    auto sp = directive.find_first_of(" \t");
    auto name = ascii_lower(directive.substr(0, sp));
    if (name.size() > 4 && name.substr(name.size() - 4) == "-src") has_directives = true;
    if (name == "connect-src") {
      return parse_csp_source_list(sp == std::string_view::npos ? std::string_view{} : directive.substr(sp));
    }
    if (semi != std::string_view::npos) has_directives = true;
  }
  if (has_directives) return std::nullopt;
  return parse_csp_source_list(policy);
}

namespace detail {

inline bool csp_host_matches(std::string_view pattern, std::string_view host) {
  if (pattern.substr(0, 2) == "*.") {
    auto suffix = pattern.substr(1);  // ".example.com"
    return host.size() > suffix.size() && host.substr(host.size() - suffix.size()) == suffix;
  }
  return pattern == host;
}

inline bool csp_path_matches(std::string_view source_path, std::string_view url_path) {
  if (source_path.empty() || source_path == "/") return true;
  std::string sp = percent_decode(source_path);
  std::string up = percent_decode(url_path.empty() ? "/" : url_path);
  if (sp.back() == '/') return up.substr(0, sp.size()) == sp;
  return up == sp;
}

inline bool is_network_scheme(std::string_view s) { return s == "http" || s == "https" || s == "ws" || s == "wss"; }

}  // namespace detail

// Scheme matching is exact: an https source never admits an http URL.
// Scheme-less host sources take `self_scheme`. 'self' matches `self_origin`.
inline bool csp_connect_src_allows(const CspConnectSrc& directive, std::string_view url,
                                   std::string_view self_origin = "https://twitter.com") {
  Uri u = parse_absolute_uri(url);
  std::string scheme = ascii_lower(u.scheme);
  std::string host = u.host();
  Uri self = parse_absolute_uri(self_origin);
  std::string self_scheme = ascii_lower(self.scheme);

  for (const auto& s : directive.sources) {
    switch (s.kind) {
      case CspSource::Kind::any:
        if (detail::is_network_scheme(scheme)) return true;
        break;
      case CspSource::Kind::none:
      case CspSource::Kind::other_keyword:
        break;
      case CspSource::Kind::self:
        if (u.origin() == self.origin()) return true;
        break;
      case CspSource::Kind::scheme:
        if (s.scheme == scheme) return true;
        break;
      case CspSource::Kind::host: {
        std::string want_scheme = s.scheme.empty() ? self_scheme : s.scheme;
        if (want_scheme != scheme) break;
        if (!detail::csp_host_matches(s.host, host)) break;
        if (s.port) {
          if (*s.port != "*" && std::to_string(u.port()) != *s.port) break;
        } else {
          std::uint16_t default_port = scheme == "https" || scheme == "wss" ? 443 : 80;
          if (u.port() != default_port) break;
        }
        if (!detail::csp_path_matches(s.path, u.path)) break;
        return true;
      }
    }
  }
  return false;
}

enum class HttpsVerdict { enforced, header_only, not_enforced };

inline std::string to_string(HttpsVerdict v) {
  switch (v) {
    case HttpsVerdict::enforced: return "ENFORCED";
    case HttpsVerdict::header_only: return "HEADER_ONLY";
    case HttpsVerdict::not_enforced: return "NOT_ENFORCED";
  }
  return "NOT_ENFORCED";
}

struct HttpsEnforcementReport {
  HttpsVerdict verdict = HttpsVerdict::not_enforced;
  std::vector<std::string> findings;
};

// Preloaded or not served over http: ENFORCED. Served over http with an
// active STS header: HEADER_ONLY (the first visit is still exposed).
// Otherwise NOT_ENFORCED.
inline HttpsEnforcementReport evaluate_https_enforcement(const PlainHttpResult& plain, const std::optional<StsPolicy>& sts,
                                                         const PreloadStatus& preload) {
  HttpsEnforcementReport r;
  bool sts_active = sts && sts->active();

  if (plain.served) {
    r.findings.push_back("content served over plain http (" + plain.http_outcome.label() + ")");
  } else {
    r.findings.push_back("plain http not served (" + plain.http_outcome.label() + ")");
  }
  if (!sts) {
    r.findings.push_back("no STS header");
  } else if (!sts->active()) {
    r.findings.push_back("STS max-age=0 removes the policy");
  } else {
    r.findings.push_back("STS header present: " + sts->raw);
  }
  if (preload.host_listed) {
    r.findings.push_back(preload.matched_parent ? "host preloaded via " + *preload.matched_parent
                                                : "host on HSTS preload list");
  } else {
    r.findings.push_back("host not on HSTS preload list");
  }

  if (preload.host_listed || !plain.served) {
    r.verdict = HttpsVerdict::enforced;
  } else if (sts_active) {
    r.verdict = HttpsVerdict::header_only;
    r.findings.push_back("content served over plain http despite STS");
  } else {
    r.verdict = HttpsVerdict::not_enforced;
  }
  return r;
}

}  // namespace dmaudit
