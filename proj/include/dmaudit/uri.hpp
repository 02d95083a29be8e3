#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "dmaudit/error.hpp"

namespace dmaudit {

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
           return std::tolower(x) == std::tolower(y);
         });
}

// A URI reference split into its five generic components. Absent and empty
// components are distinct ("http://h/p?" has an empty query).
struct Uri {
  std::string scheme;  // empty for relative references
  std::optional<std::string> authority;
  std::string path;
  std::optional<std::string> query;
  std::optional<std::string> fragment;

  bool is_absolute() const { return !scheme.empty(); }

  std::string str() const {
    std::string out;
    if (!scheme.empty()) out += scheme + ":";
    if (authority) out += "//" + *authority;
    out += path;
    if (query) out += "?" + *query;
    if (fragment) out += "#" + *fragment;
    return out;
  }

  // Host without userinfo, port or IPv6 brackets; lowercased.
  std::string host() const {
    if (!authority) return {};
    std::string_view a = *authority;
    if (auto at = a.rfind('@'); at != std::string_view::npos) a.remove_prefix(at + 1);
    if (!a.empty() && a.front() == '[') {
      auto close = a.find(']');
      return ascii_lower(a.substr(1, close == std::string_view::npos ? a.npos : close - 1));
    }
    if (auto colon = a.rfind(':'); colon != std::string_view::npos) a = a.substr(0, colon);
    return ascii_lower(a);
  }

  std::optional<std::uint16_t> explicit_port() const {
    if (!authority) return std::nullopt;
    std::string_view a = *authority;
    if (auto at = a.rfind('@'); at != std::string_view::npos) a.remove_prefix(at + 1);
    if (auto close = a.rfind(']'); close != std::string_view::npos) a.remove_prefix(close + 1);
    auto colon = a.rfind(':');
    if (colon == std::string_view::npos || colon + 1 == a.size()) return std::nullopt;
    unsigned value = 0;
    for (char c : a.substr(colon + 1)) value = value * 10 + static_cast<unsigned>(c - '0');
    return static_cast<std::uint16_t>(value);
  }

  std::uint16_t port() const {
    if (auto p = explicit_port()) return *p;
    return ascii_lower(scheme) == "https" ? 443 : 80;
  }

  // "scheme://authority", lowercased scheme and host, default port elided.
  std::string origin() const {
    std::string s = ascii_lower(scheme);
    std::string out = s + "://" + host();
    auto p = explicit_port();
    if (p && !((s == "http" && *p == 80) || (s == "https" && *p == 443))) {
      out += ":" + std::to_string(*p);
    }
    return out;
  }

  // Path plus query, as sent on an HTTP request line.
  std::string request_target() const {
    std::string out = path.empty() ? "/" : path;
    if (query) out += "?" + *query;
    return out;
  }

  Uri with_scheme(std::string s) const {
    Uri copy = *this;
    copy.scheme = std::move(s);
    return copy;
  }

  friend bool operator==(const Uri&, const Uri&) = default;
};

namespace detail {

inline bool is_scheme_char(char c, bool first) {
  if (std::isalpha(static_cast<unsigned char>(c))) return true;
  if (first) return false;
  return std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.';
}

inline bool is_hex(char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; }

// Rejects whitespace, controls, and broken percent-escapes.
inline void check_characters(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (c <= 0x20 || c == 0x7f || c == '"' || c == '<' || c == '>' || c == '\\' || c == '^' ||
        c == '`' || c == '{' || c == '|' || c == '}') {
      throw InvalidUri("illegal character in \"" + std::string(text) + "\"");
    }
    if (c == '%') {
      if (i + 2 >= text.size() || !is_hex(text[i + 1]) || !is_hex(text[i + 2])) {
        throw InvalidUri("bad percent-escape in \"" + std::string(text) + "\"");
      }
    }
  }
}

inline void check_authority(std::string_view a) {
  if (auto at = a.rfind('@'); at != std::string_view::npos) a.remove_prefix(at + 1);
  if (!a.empty() && a.front() == '[') {
    auto close = a.find(']');
    if (close == std::string_view::npos) throw InvalidUri("unterminated IP literal");
    a.remove_prefix(close + 1);
    if (!a.empty() && a.front() != ':') throw InvalidUri("junk after IP literal");
    if (!a.empty()) a.remove_prefix(1);
    if (!std::all_of(a.begin(), a.end(), [](unsigned char c) { return std::isdigit(c); })) {
      throw InvalidUri("bad port");
    }
    return;
  }
  auto colon = a.rfind(':');
  if (colon == std::string_view::npos) return;
  auto port = a.substr(colon + 1);
  if (!std::all_of(port.begin(), port.end(), [](unsigned char c) { return std::isdigit(c); }) ||
      port.size() > 5 || (!port.empty() && std::stoul(std::string(port)) > 65535)) {
    throw InvalidUri("bad port in authority \"" + std::string(a) + "\"");
  }
}

}  // namespace detail

// Splits a URI reference per the generic syntax (the RFC 3986 appendix B
// decomposition) and validates characters, scheme and port.
inline Uri parse_uri(std::string_view text) {
  detail::check_characters(text);
  Uri u;
  std::string_view rest = text;

  auto scheme_end = rest.find(':');
  auto delim = rest.find_first_of("/?#");
  if (scheme_end != std::string_view::npos && scheme_end > 0 &&
      (delim == std::string_view::npos || scheme_end < delim)) {
    auto candidate = rest.substr(0, scheme_end);
    bool ok = detail::is_scheme_char(candidate[0], true);
    for (std::size_t i = 1; ok && i < candidate.size(); ++i) {
      ok = detail::is_scheme_char(candidate[i], false);
    }
    if (!ok) throw InvalidUri("bad scheme in \"" + std::string(text) + "\"");
    u.scheme = std::string(candidate);
    rest.remove_prefix(scheme_end + 1);
  }

  if (rest.substr(0, 2) == "//") {
    rest.remove_prefix(2);
    auto end = rest.find_first_of("/?#");
    u.authority = std::string(rest.substr(0, end));
    detail::check_authority(*u.authority);
    rest = end == std::string_view::npos ? std::string_view{} : rest.substr(end);
  }

  auto hash = rest.find('#');
  if (hash != std::string_view::npos) {
    u.fragment = std::string(rest.substr(hash + 1));
    rest = rest.substr(0, hash);
  }
  auto qmark = rest.find('?');
  if (qmark != std::string_view::npos) {
    u.query = std::string(rest.substr(qmark + 1));
    rest = rest.substr(0, qmark);
  }
  u.path = std::string(rest);
  return u;
}

inline Uri parse_absolute_uri(std::string_view text) {
  Uri u = parse_uri(text);
  if (!u.is_absolute()) throw InvalidUri("not absolute: \"" + std::string(text) + "\"");
  return u;
}

inline std::string remove_dot_segments(std::string_view input) {
  std::string in(input);
  std::string out;
  while (!in.empty()) {
    if (in.rfind("../", 0) == 0) {
      in.erase(0, 3);
    } else if (in.rfind("./", 0) == 0) {
      in.erase(0, 2);
    } else if (in.rfind("/./", 0) == 0) {
      in.erase(0, 2);
    } else if (in == "/.") {
      in = "/";
    } else if (in.rfind("/../", 0) == 0 || in == "/..") {
      in = in.size() == 3 ? std::string("/") : in.substr(3);
      auto last = out.rfind('/');
      out.erase(last == std::string::npos ? 0 : last);
    } else if (in == "." || in == "..") {
      in.clear();
    } else {
      auto next = in.find('/', in[0] == '/' ? 1 : 0);
      out += in.substr(0, next);
      in.erase(0, next == std::string::npos ? in.size() : next);
    }
  }
  return out;
}

namespace detail {

inline std::string merge_paths(const Uri& base, const std::string& ref_path) {
  if (base.authority && base.path.empty()) return "/" + ref_path;
  auto slash = base.path.rfind('/');
  if (slash == std::string::npos) return ref_path;
  return base.path.substr(0, slash + 1) + ref_path;
}

}  // namespace detail

// Strict reference resolution (RFC 3986 section 5.2.2).
inline Uri resolve_uri(const Uri& base, const Uri& ref) {
  if (!base.is_absolute()) throw InvalidUri("base is not absolute: " + base.str());
  Uri target;
  if (!ref.scheme.empty()) {
    target = ref;
    target.path = remove_dot_segments(ref.path);
  } else {
    if (ref.authority) {
      target.authority = ref.authority;
      target.path = remove_dot_segments(ref.path);
      target.query = ref.query;
    } else {
      if (ref.path.empty()) {
        target.path = base.path;
        target.query = ref.query ? ref.query : base.query;
      } else {
        if (ref.path.front() == '/') {
          target.path = remove_dot_segments(ref.path);
        } else {
          target.path = remove_dot_segments(detail::merge_paths(base, ref.path));
        }
        target.query = ref.query;
      }
      target.authority = base.authority;
    }
    target.scheme = base.scheme;
  }
  target.fragment = ref.fragment;
  return target;
}

inline std::string resolve_uri(std::string_view base, std::string_view reference) {
  return resolve_uri(parse_absolute_uri(base), parse_uri(reference)).str();
}

inline bool is_unreserved(unsigned char c) {
  return std::isalnum(c) || c == '-' || c == '.' || c == '_' || c == '~';
}

// Percent-encodes everything outside the unreserved set and `keep`.
inline std::string percent_encode(std::string_view s, std::string_view keep = "") {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (is_unreserved(c) || keep.find(static_cast<char>(c)) != std::string_view::npos) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xf]);
    }
  }
  return out;
}

inline std::string percent_decode(std::string_view s, bool plus_as_space = false) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size() && detail::is_hex(s[i + 1]) &&
        detail::is_hex(s[i + 2])) {
      out.push_back(static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16)));
      i += 2;
    } else if (plus_as_space && s[i] == '+') {
      out.push_back(' ');
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

// Value of `name` in an application/x-www-form-urlencoded query, decoded.
inline std::optional<std::string> query_param(std::string_view query, std::string_view name) {
  while (!query.empty()) {
    auto amp = query.find('&');
    auto pair = query.substr(0, amp);
    auto eq = pair.find('=');
    if (percent_decode(pair.substr(0, eq), true) == name) {
      return eq == std::string_view::npos ? std::string{} : percent_decode(pair.substr(eq + 1), true);
    }
    if (amp == std::string_view::npos) break;
    query.remove_prefix(amp + 1);
  }
  return std::nullopt;
}

}  // namespace dmaudit
