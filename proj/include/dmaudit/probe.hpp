#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dmaudit/error.hpp"
#include "dmaudit/http.hpp"
#include "dmaudit/uri.hpp"
#include "dmaudit/version.hpp"

namespace dmaudit {

using std::chrono::milliseconds;

// What the Cookie header of a profile stands for.
enum class CookieRole { none, session_party, third_party, expired };

inline std::string to_string(CookieRole r) {
  switch (r) {
    case CookieRole::none: return "NONE";
    case CookieRole::session_party: return "SESSION_PARTY";
    case CookieRole::third_party: return "THIRD_PARTY";
    case CookieRole::expired: return "EXPIRED";
  }
  return "NONE";
}

inline CookieRole cookie_role_from_string(std::string_view s) {
  if (s == "NONE") return CookieRole::none;
  if (s == "SESSION_PARTY") return CookieRole::session_party;
  if (s == "THIRD_PARTY") return CookieRole::third_party;
  if (s == "EXPIRED") return CookieRole::expired;
  throw std::invalid_argument("unknown cookie_role \"" + std::string(s) + "\"");
}

struct HeaderProfile {
  std::string name;
  http::HeaderList headers;
  CookieRole cookie_role = CookieRole::none;
  bool has_referer = false;

  friend bool operator==(const HeaderProfile&, const HeaderProfile&) = default;
};

// Enforces the annotation invariants: role NONE iff no Cookie header,
// has_referer iff a Referer header.
inline void validate_profile(const HeaderProfile& p) {
  if (p.name.empty()) throw std::invalid_argument("profile without a name");
  bool cookie = http::has_header(p.headers, "Cookie");
  if (cookie != (p.cookie_role != CookieRole::none)) {
    throw std::invalid_argument("profile " + p.name + ": cookie_role " + to_string(p.cookie_role) +
                                (cookie ? " but a Cookie header is present" : " but no Cookie header"));
  }
  if (http::has_header(p.headers, "Referer") != p.has_referer) {
    throw std::invalid_argument("profile " + p.name + ": has_referer disagrees with headers");
  }
}

namespace profile_names {
inline constexpr const char* full_session = "FULL_SESSION";
inline constexpr const char* no_cookie = "NO_COOKIE";
inline constexpr const char* no_referer = "NO_REFERER";
inline constexpr const char* third_party = "THIRD_PARTY";
inline constexpr const char* expired = "EXPIRED";
}  // namespace profile_names

// Cookie values for the default matrix. Obtaining them is the operator's job.
struct MatrixCredentials {
  std::string session_cookie = "auth_token=SESSION_COOKIE_UNSET";
  std::string third_party_cookie = "auth_token=THIRD_PARTY_COOKIE_UNSET";
  std::string expired_cookie = "auth_token=EXPIRED_COOKIE_UNSET";
  std::string referer = "https://twitter.com/";
};

// The five probes: the browser request with its session cookie, then the
// same request with the cookie removed, with the Referer removed, with a
// third party's cookie, and with a cookie from an expired session.
inline std::vector<HeaderProfile> build_default_matrix(const MatrixCredentials& creds = {}) {
  const http::HeaderList browser = {
      {"Accept", "image/webp,image/png,image/svg+xml,image/*;q=0.8,video/*;q=0.8,*/*;q=0.5"},
      {"User-Agent",
       "Mozilla/5.0 (Macintosh; Intel Mac OS X 10_15_7) AppleWebKit/605.1.15 (KHTML, like Gecko) "
       "Version/15.3 Safari/605.1.15"},
      {"Accept-Language", "en-us"},
  };
  auto make = [&](const char* name, CookieRole role, const std::string* cookie, bool referer) {
    HeaderProfile p{name, {}, role, referer};
    if (cookie != nullptr) p.headers.emplace_back("Cookie", *cookie);
    p.headers.insert(p.headers.end(), browser.begin(), browser.end());
    if (referer) p.headers.emplace_back("Referer", creds.referer);
    return p;
  };
  using namespace profile_names;
  return {
      make(full_session, CookieRole::session_party, &creds.session_cookie, true),
      make(no_cookie, CookieRole::none, nullptr, true),
      make(no_referer, CookieRole::session_party, &creds.session_cookie, false),
      make(third_party, CookieRole::third_party, &creds.third_party_cookie, true),
      make(expired, CookieRole::expired, &creds.expired_cookie, true),
  };
}

enum class OutcomeKind { status, empty_reply, timeout, transport_error };

struct ProbeOutcome {
  OutcomeKind kind = OutcomeKind::transport_error;
  int status = 0;
  std::optional<std::size_t> body_length;  // measured; only for status outcomes
  std::optional<std::size_t> declared_length;
  http::HeaderList response_headers;
  milliseconds elapsed{0};
  std::string error;

  bool is_status() const { return kind == OutcomeKind::status; }
  int status_class() const { return is_status() ? status / 100 : 0; }

  std::string label() const {
    switch (kind) {
      case OutcomeKind::status: return std::to_string(status);
      case OutcomeKind::empty_reply: return "EMPTY_REPLY";
      case OutcomeKind::timeout: return "TIMEOUT";
      case OutcomeKind::transport_error: return "TRANSPORT_ERROR";
    }
    return "?";
  }

  static ProbeOutcome of_status(int code, std::size_t length) {
    ProbeOutcome o;
    o.kind = OutcomeKind::status;
    o.status = code;
    o.body_length = length;
    return o;
  }
  static ProbeOutcome of(OutcomeKind k) {
    ProbeOutcome o;
    o.kind = k;
    return o;
  }
};

struct ProbeLimits {
  http::ClientOptions client;  // redirects default to none
  milliseconds inter_probe_delay{250};
};

namespace detail {

inline const std::vector<std::string>& selected_response_headers() {
  static const std::vector<std::string> kNames = {
      "content-length", "content-type", "location", "set-cookie", "www-authenticate",
      "strict-transport-security", "content-security-policy", "cache-control"};
  return kNames;
}

inline ProbeOutcome outcome_from(const http::Result& r) {
  ProbeOutcome o;
  o.elapsed = r.elapsed;
  switch (r.failure) {
    case http::Failure::none:
      o.kind = OutcomeKind::status;
      o.status = r.response.status;
      o.body_length = r.response.body.size();
      o.declared_length = r.response.declared_length;
      for (const auto& [k, v] : r.response.headers) {
        const auto& names = selected_response_headers();
        if (std::find(names.begin(), names.end(), ascii_lower(k)) != names.end()) {
          o.response_headers.emplace_back(ascii_lower(k), v);
        }
      }
      break;
    case http::Failure::empty_reply: o.kind = OutcomeKind::empty_reply; break;
    case http::Failure::timeout: o.kind = OutcomeKind::timeout; break;
    case http::Failure::transport: o.kind = OutcomeKind::transport_error; break;
  }
  o.error = r.error;
  return o;
}

inline Uri require_http_url(std::string_view url) {
  Uri u = parse_absolute_uri(url);
  auto s = ascii_lower(u.scheme);
  if (s != "http" && s != "https") throw std::invalid_argument("probe needs an http(s) URL: " + std::string(url));
  return u;
}

}  // namespace detail

// Exactly one GET carrying exactly the profile's headers. No retries.
inline ProbeOutcome probe_once(std::string_view url, const HeaderProfile& profile, const ProbeLimits& limits) {
  Uri u = detail::require_http_url(url);
  return detail::outcome_from(http::get(u, profile.headers, limits.client));
}

struct MatrixEntry {
  std::string profile;
  ProbeOutcome outcome;
};

struct OutcomeMatrix {
  std::string url;
  std::vector<MatrixEntry> entries;          // in profile order
  std::vector<std::string> execution_order;  // by wall-clock start

  const ProbeOutcome* find(std::string_view name) const {
    for (const auto& e : entries) {
      if (e.profile == name) return &e.outcome;
    }
    return nullptr;
  }

  void set(std::string name, ProbeOutcome o) {
    for (auto& e : entries) {
      if (e.profile == name) {
        e.outcome = std::move(o);
        return;
      }
    }
    execution_order.push_back(name);
    entries.push_back({std::move(name), std::move(o)});
  }
};

// Runs every profile once. Probes run concurrently only when the target is
// loopback (the mock server); external targets are probed one at a time
// with the inter-probe delay.
inline OutcomeMatrix run_matrix(std::string_view url, const std::vector<HeaderProfile>& profiles,
                                const ProbeLimits& limits) {
  if (profiles.empty()) throw std::invalid_argument("run_matrix needs at least one profile");
  std::set<std::string> names;
  for (const auto& p : profiles) {
    validate_profile(p);
    if (!names.insert(p.name).second) throw std::invalid_argument("duplicate profile name " + p.name);
  }
  Uri u = detail::require_http_url(url);

  OutcomeMatrix m;
  m.url = std::string(url);
  m.entries.resize(profiles.size());
  std::vector<std::size_t> start_seq(profiles.size());
  std::atomic<std::size_t> counter{0};

  auto run_one = [&](std::size_t i) {
    start_seq[i] = counter.fetch_add(1);
    m.entries[i] = MatrixEntry{profiles[i].name, detail::outcome_from(http::get(u, profiles[i].headers, limits.client))};
  };

  if (!http::is_external(u, limits.client.endpoints)) {
    std::vector<std::future<void>> jobs;
    for (std::size_t i = 0; i < profiles.size(); ++i) jobs.push_back(std::async(std::launch::async, run_one, i));
    for (auto& j : jobs) j.get();
  } else {
    for (std::size_t i = 0; i < profiles.size(); ++i) {
      if (i > 0) std::this_thread::sleep_for(std::max(limits.inter_probe_delay, milliseconds{250}));
      run_one(i);
    }
  }

  std::vector<std::size_t> order(profiles.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return start_seq[a] < start_seq[b]; });
  for (auto i : order) m.execution_order.push_back(profiles[i].name);
  return m;
}

enum class Verdict { yes, no, indeterminate };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::yes: return "true";
    case Verdict::no: return "false";
    case Verdict::indeterminate: return "INDETERMINATE";
  }
  return "INDETERMINATE";
}

struct Evidence {
  std::string profile;
  std::string outcome;  // outcome label, or "absent"

  friend bool operator==(const Evidence&, const Evidence&) = default;
};

struct VerdictField {
  Verdict value = Verdict::indeterminate;
  std::vector<Evidence> evidence;

  friend bool operator==(const VerdictField&, const VerdictField&) = default;
};

struct ProtectionProfile {
  VerdictField unauthenticated_access;
  VerdictField cookie_required;
  VerdictField referer_required;
  VerdictField party_bound;
  VerdictField session_liveness_bound;

  friend bool operator==(const ProtectionProfile&, const ProtectionProfile&) = default;
};

// Deterministic rules over the named witness profiles. A field whose
// witnesses are missing, or did not produce an HTTP status where one is
// needed, stays INDETERMINATE. Status classes compare by hundreds digit.
inline ProtectionProfile classify(const OutcomeMatrix& m) {
  using namespace profile_names;
  const ProbeOutcome* none = m.find(no_cookie);
  if (none == nullptr) throw InsufficientEvidence("matrix has no NO_COOKIE outcome");
  const ProbeOutcome* full = m.find(full_session);
  const ProbeOutcome* noref = m.find(no_referer);
  const ProbeOutcome* third = m.find(third_party);
  const ProbeOutcome* exp = m.find(expired);

  auto ev = [](const char* name, const ProbeOutcome* o) {
    return Evidence{name, o != nullptr ? o->label() : "absent"};
  };
  auto decided = [](bool value, std::vector<Evidence> e) {
    return VerdictField{value ? Verdict::yes : Verdict::no, std::move(e)};
  };
  auto undecided = [](std::vector<Evidence> e) { return VerdictField{Verdict::indeterminate, std::move(e)}; };
  auto usable = [](const ProbeOutcome* o) { return o != nullptr && o->is_status(); };

  ProtectionProfile p;

  bool open = none->is_status() && none->status_class() == 2 && none->body_length.value_or(0) > 0;
  p.unauthenticated_access = decided(open, {ev(no_cookie, none)});

  if (open) {
    p.cookie_required = decided(false, {ev(no_cookie, none)});
  } else if (usable(none) && usable(full)) {
    bool denied = none->status == 401 || none->status == 403;
    p.cookie_required = decided(denied && full->status_class() == 2, {ev(no_cookie, none), ev(full_session, full)});
  } else {
    p.cookie_required = undecided({ev(no_cookie, none), ev(full_session, full)});
  }

  if (usable(noref) && usable(full)) {
    p.referer_required = decided(noref->status_class() != full->status_class(),
                                 {ev(no_referer, noref), ev(full_session, full)});
  } else {
    p.referer_required = undecided({ev(no_referer, noref), ev(full_session, full)});
  }

  if (usable(third) && usable(full)) {
    p.party_bound = decided(third->status_class() == 4 && full->status_class() == 2,
                            {ev(third_party, third), ev(full_session, full)});
  } else {
    p.party_bound = undecided({ev(third_party, third), ev(full_session, full)});
  }

  if (exp != nullptr && (exp->kind == OutcomeKind::empty_reply || exp->kind == OutcomeKind::transport_error)) {
    p.session_liveness_bound = decided(true, {ev(expired, exp)});
  } else if (usable(exp)) {
    p.session_liveness_bound = decided(false, {ev(expired, exp)});
  } else {
    p.session_liveness_bound = undecided({ev(expired, exp)});
  }
  return p;
}

struct PlainHttpResult {
  bool served = false;
  ProbeOutcome http_outcome;
  ProbeOutcome https_outcome;
  bool lengths_match = false;
};

inline http::HeaderList default_probe_headers() {
  return {{"User-Agent", std::string("dmaudit/") + kVersion}, {"Accept", "*/*"}};
}

// Fetches the https URL and its http twin with plain default headers.
inline PlainHttpResult check_plain_http(std::string_view url, const ProbeLimits& limits) {
  Uri secure = detail::require_http_url(url);
  if (ascii_lower(secure.scheme) != "https") throw std::invalid_argument("check_plain_http needs an https URL");
  Uri plain = secure.with_scheme("http");
  if (auto p = secure.explicit_port(); p && *p == 443) plain.authority = secure.host();

  PlainHttpResult r;
  auto headers = default_probe_headers();
  r.https_outcome = detail::outcome_from(http::get(secure, headers, limits.client));
  r.http_outcome = detail::outcome_from(http::get(plain, headers, limits.client));
  r.served = r.http_outcome.is_status() && r.http_outcome.status_class() == 2;
  auto length = [](const ProbeOutcome& o) { return o.declared_length ? o.declared_length : o.body_length; };
  r.lengths_match = r.http_outcome.is_status() && r.https_outcome.is_status() &&
                    length(r.http_outcome) == length(r.https_outcome);
  return r;
}

}  // namespace dmaudit
