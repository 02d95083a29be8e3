#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include "dmaudit/assembler.hpp"
#include "dmaudit/digest.hpp"
#include "dmaudit/error.hpp"
#include "dmaudit/http.hpp"
#include "dmaudit/playlist.hpp"
#include "dmaudit/uri.hpp"

namespace dmaudit {

// 14 ASCII digits (YYYYMMDDhhmmss) naming a real UTC second.
inline bool is_valid_timestamp(std::string_view ts) {
  if (ts.size() != 14 || !std::all_of(ts.begin(), ts.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return false;
  }
  auto num = [&](std::size_t pos, std::size_t len) { return std::stoi(std::string(ts.substr(pos, len))); };
  int year = num(0, 4), month = num(4, 2), day = num(6, 2);
  int hour = num(8, 2), minute = num(10, 2), second = num(12, 2);
  if (month < 1 || month > 12 || day < 1 || hour > 23 || minute > 59 || second > 59) return false;
  static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
  int max_day = kDays[month - 1] + (month == 2 && leap ? 1 : 0);
  return day <= max_day;
}

inline std::string format_timestamp(std::chrono::system_clock::time_point t) {
  std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[16];
  std::strftime(buf, sizeof buf, "%Y%m%d%H%M%S", &tm);
  return buf;
}

inline std::chrono::system_clock::time_point parse_timestamp(std::string_view ts) {
  if (!is_valid_timestamp(ts)) throw std::invalid_argument("bad timestamp " + std::string(ts));
  std::tm tm{};
  auto num = [&](std::size_t pos, std::size_t len) { return std::stoi(std::string(ts.substr(pos, len))); };
  tm.tm_year = num(0, 4) - 1900;
  tm.tm_mon = num(4, 2) - 1;
  tm.tm_mday = num(6, 2);
  tm.tm_hour = num(8, 2);
  tm.tm_min = num(10, 2);
  tm.tm_sec = num(12, 2);
  return std::chrono::system_clock::from_time_t(timegm(&tm));
}

struct CdxRecord {
  std::string urlkey;
  std::string timestamp;
  std::string original;
  std::string mimetype;
  std::string status;
  std::string digest;
  std::string length;

  friend bool operator==(const CdxRecord&, const CdxRecord&) = default;
  friend auto operator<=>(const CdxRecord& a, const CdxRecord& b) {
    return std::tie(a.timestamp, a.original, a.urlkey, a.mimetype, a.status, a.digest, a.length) <=>
           std::tie(b.timestamp, b.original, b.urlkey, b.mimetype, b.status, b.digest, b.length);
  }
};

struct CdxMalformedLine {
  std::size_t line = 0;  // 1-based within the parsed text
  std::string text;
  std::string reason;
};

struct CdxParseResult {
  std::vector<CdxRecord> records;
  std::vector<CdxMalformedLine> malformed;
  std::size_t pages = 1;
};

inline std::string format_cdx_line(const CdxRecord& r) {
  return r.urlkey + " " + r.timestamp + " " + r.original + " " + r.mimetype + " " + r.status + " " + r.digest +
         " " + r.length;
}

// Seven space-separated fields per line. Every non-blank line ends up in
// exactly one of records or malformed.
inline CdxParseResult parse_cdx(std::string_view text) {
  CdxParseResult out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    std::vector<std::string> fields;
    std::string_view rest = line;
    while (!rest.empty()) {
      auto sp = rest.find(' ');
      if (sp != 0) fields.emplace_back(rest.substr(0, sp));
      if (sp == std::string_view::npos) break;
      rest.remove_prefix(sp + 1);
    }
    if (fields.size() != 7) {
      out.malformed.push_back({line_no, std::string(line), "expected 7 fields, got " + std::to_string(fields.size())});
      continue;
    }
    if (!is_valid_timestamp(fields[1])) {
      out.malformed.push_back({line_no, std::string(line), "bad timestamp " + fields[1]});
      continue;
    }
    out.records.push_back(CdxRecord{fields[0], fields[1], fields[2], fields[3], fields[4], fields[5], fields[6]});
  }
  return out;
}

// One archived capture; raw selects the byte-exact `id_` replay.
struct SnapshotRef {
  std::string timestamp;
  std::string original;
  bool raw = false;

  friend bool operator==(const SnapshotRef&, const SnapshotRef&) = default;
};

namespace detail {

inline std::string trim_endpoint(std::string_view endpoint) {
  while (!endpoint.empty() && endpoint.back() == '/') endpoint.remove_suffix(1);
  return std::string(endpoint);
}

}  // namespace detail

inline std::string to_replay_url(const SnapshotRef& s, std::string_view endpoint) {
  return detail::trim_endpoint(endpoint) + "/web/" + s.timestamp + (s.raw ? "id_" : "") + "/" + s.original;
}

// Inverse of to_replay_url for the same endpoint. Also accepts the
// endpoint-relative form "/web/<ts>[id_]/<original>".
inline std::optional<SnapshotRef> parse_replay_url(std::string_view url, std::string_view endpoint) {
  std::string prefix = detail::trim_endpoint(endpoint) + "/web/";
  if (url.substr(0, prefix.size()) == prefix) {
    url.remove_prefix(prefix.size());
  } else if (url.substr(0, 5) == "/web/") {
    url.remove_prefix(5);
  } else {
    return std::nullopt;
  }
  if (url.size() < 15 || !is_valid_timestamp(url.substr(0, 14))) return std::nullopt;
  SnapshotRef s;
  s.timestamp = std::string(url.substr(0, 14));
  url.remove_prefix(14);
  if (url.substr(0, 3) == "id_") {
    s.raw = true;
    url.remove_prefix(3);
  }
  if (url.empty() || url.front() != '/') return std::nullopt;
  s.original = std::string(url.substr(1));
  return s;
}

struct ArchiveOptions {
  std::string endpoint = "https://web.archive.org";
  http::ClientOptions client;
  milliseconds spn_interval{5000};  // applies to non-loopback endpoints
  int max_rate_limit_retries = 3;
  milliseconds max_backoff{120000};
  std::size_t concurrency = 4;
};

struct SubmitResult {
  bool accepted = false;
  int status = 0;
  std::optional<SnapshotRef> snapshot;
  std::string detail;
};

// Asks the archive to capture `url` now via <endpoint>/save/<url>.
inline SubmitResult spn_submit(std::string_view url, const ArchiveOptions& opts) {
  Uri target = parse_absolute_uri(url);  // throws before any request is issued
  auto scheme = ascii_lower(target.scheme);
  if (scheme != "http" && scheme != "https") throw std::invalid_argument("cannot archive " + std::string(url));

  auto save_url = detail::trim_endpoint(opts.endpoint) + "/save/" + std::string(url);
  auto r = http::get(save_url, default_probe_headers(), opts.client);
  if (!r.ok()) throw ArchiveError(ArchiveErrorKind::submit_failed, 0, "save " + std::string(url) + ": " + r.error);

  const auto& resp = r.response;
  if (resp.status == 429) {
    std::optional<int> retry;
    if (auto ra = http::find_header(resp.headers, "Retry-After")) {
      auto v = detail::parse_int<int>(*ra);
      if (v) retry = *v;
    }
    throw ArchiveError(ArchiveErrorKind::rate_limited, 429, "save " + std::string(url) + ": rate limited", retry);
  }

  SubmitResult out;
  out.status = resp.status;
  for (const char* h : {"Content-Location", "Location"}) {
    if (auto loc = http::find_header(resp.headers, h)) {
      if (auto snap = parse_replay_url(*loc, opts.endpoint)) {
        out.snapshot = snap;
        break;
      }
    }
  }
  bool redirect_to_capture = resp.status / 100 == 3 && out.snapshot.has_value();
  if (resp.status / 100 != 2 && !redirect_to_capture) {
    throw ArchiveError(ArchiveErrorKind::submit_failed, resp.status,
                       "save " + std::string(url) + ": HTTP " + std::to_string(resp.status));
  }
  out.accepted = true;
  out.detail = out.snapshot ? "captured at " + out.snapshot->timestamp : "accepted; capture time not disclosed";
  return out;
}

struct PushResult {
  std::string uri;
  bool accepted = false;
  std::optional<SnapshotRef> snapshot;
  int attempts = 0;
  std::string error;
};

// Submits each URI in order, one at a time, pacing submissions and backing
// off on rate limiting.
inline std::vector<PushResult> push_all(const std::vector<std::string>& uris, const ArchiveOptions& opts) {
  std::vector<PushResult> out;
  bool external = http::is_external(parse_absolute_uri(opts.endpoint), opts.client.endpoints);
  for (std::size_t i = 0; i < uris.size(); ++i) {
    if (i > 0 && external) std::this_thread::sleep_for(std::max(opts.spn_interval, milliseconds{5000}));
    PushResult pr;
    pr.uri = uris[i];
    for (;;) {
      ++pr.attempts;
      try {
        auto r = spn_submit(uris[i], opts);
        pr.accepted = r.accepted;
        pr.snapshot = r.snapshot;
        pr.error.clear();
        break;
      } catch (const ArchiveError& e) {
        pr.error = e.what();
        if (e.kind != ArchiveErrorKind::rate_limited || pr.attempts > opts.max_rate_limit_retries) break;
        milliseconds wait = e.retry_after_seconds ? milliseconds{*e.retry_after_seconds * 1000}
                                                  : milliseconds{external ? 60000 : 1000};
        std::this_thread::sleep_for(std::min(wait, opts.max_backoff));
      } catch (const std::exception& e) {
        pr.error = e.what();
        break;
      }
    }
    out.push_back(std::move(pr));
  }
  return out;
}

namespace detail {

inline CdxParseResult cdx_query(std::string_view url, std::string_view match_type, const ArchiveOptions& opts) {
  if (url.empty()) throw std::invalid_argument("empty CDX query");
  std::string base = trim_endpoint(opts.endpoint) + "/cdx/search/cdx?url=" + percent_encode(url, "/:") +
                     "&matchType=" + std::string(match_type) + "&showResumeKey=true";
  CdxParseResult all;
  all.pages = 0;
  std::optional<std::string> resume;
  std::size_t line_offset = 0;
  for (int page = 0; page < 10000; ++page) {
    std::string q = base;
    if (resume) q += "&resumeKey=" + percent_encode(*resume);
    auto r = http::get(q, default_probe_headers(), opts.client);
    if (!r.ok()) throw ArchiveError(ArchiveErrorKind::query_failed, 0, "CDX query: " + r.error);
    if (r.response.status != 200) {
      throw ArchiveError(ArchiveErrorKind::query_failed, r.response.status,
                         "CDX query: HTTP " + std::to_string(r.response.status));
    }
    ++all.pages;
    std::string body = std::move(r.response.body);
    // A resume key, when present, follows a single blank line at the end.
    resume.reset();
    std::string_view view = body;
    while (!view.empty() && view.back() == '\n') view.remove_suffix(1);
    auto sep = view.rfind("\n\n");
    if (sep != std::string_view::npos && view.substr(sep + 2).find('\n') == std::string_view::npos) {
      resume = std::string(view.substr(sep + 2));
      view = view.substr(0, sep + 1);
    }
    auto parsed = parse_cdx(view);
    for (auto& m : parsed.malformed) m.line += line_offset;
    line_offset += static_cast<std::size_t>(std::count(view.begin(), view.end(), '\n')) + 1;
    all.records.insert(all.records.end(), parsed.records.begin(), parsed.records.end());
    all.malformed.insert(all.malformed.end(), parsed.malformed.begin(), parsed.malformed.end());
    if (!resume || resume->empty()) break;
  }
  return all;
}

}  // namespace detail

inline CdxParseResult cdx_prefix_search(std::string_view prefix, const ArchiveOptions& opts) {
  return detail::cdx_query(prefix, "prefix", opts);
}

inline CdxParseResult cdx_exact_search(std::string_view url, const ArchiveOptions& opts) {
  return detail::cdx_query(url, "exact", opts);
}

// Which path segment of a capture's original URI is the media id: the
// digit run right after `marker`. A run that ends the URI, or is followed by
// anything but '/' or '.', is treated as truncated.
struct MediaIdRule {
  std::string marker = "dm_video/";
};

struct MediaIdExtraction {
  std::optional<std::string> id;  // canonical: leading zeros stripped
  std::string key;                // digits seen, possibly truncated
  std::string problem;
};

inline MediaIdExtraction extract_media_id(std::string_view original, const MediaIdRule& rule) {
  MediaIdExtraction out;
  auto pos = original.find(rule.marker);
  if (pos == std::string_view::npos) {
    out.problem = "no \"" + rule.marker + "\" segment";
    return out;
  }
  auto rest = original.substr(pos + rule.marker.size());
  std::size_t n = 0;
  while (n < rest.size() && rest[n] >= '0' && rest[n] <= '9') ++n;
  out.key = std::string(rest.substr(0, n));
  if (n == 0) {
    out.problem = "id segment is not numeric";
  } else if (n == rest.size() || (rest[n] != '/' && rest[n] != '.')) {
    out.problem = "id segment truncated";
  } else {
    auto nz = out.key.find_first_not_of('0');
    out.id = nz == std::string::npos ? "0" : out.key.substr(nz);
  }
  return out;
}

// Numeric order on canonical digit strings of any length.
inline bool numeric_less(const std::string& a, const std::string& b) {
  return a.size() != b.size() ? a.size() < b.size() : a < b;
}

struct SurveySummary {
  std::vector<std::string> unique_ids;  // numerically sorted
  std::optional<SnapshotRef> earliest;
  std::size_t excluded_count = 0;
  std::vector<CdxRecord> malformed;
  std::size_t line_count = 0;  // unique ids + distinct malformed keys
  std::size_t record_count = 0;
};

// Collapses captures to distinct media ids, in the manner of a numeric
// sort -u over the id path field. Independent of input order.
inline SurveySummary dedupe_by_media_id(const std::vector<CdxRecord>& records, const MediaIdRule& rule,
                                        const std::vector<std::string>& exclude) {
  std::set<std::string> excluded_ids;
  for (const auto& e : exclude) {
    auto nz = e.find_first_not_of('0');
    excluded_ids.insert(nz == std::string::npos ? "0" : e.substr(nz));
  }

  SurveySummary s;
  s.record_count = records.size();
  std::set<std::string, decltype(&numeric_less)> ids(&numeric_less);
  std::set<std::string> malformed_keys;
  const CdxRecord* earliest = nullptr;

  for (const auto& r : records) {
    auto x = extract_media_id(r.original, rule);
    if (!x.id) {
      bool excluded = std::any_of(exclude.begin(), exclude.end(),
                                  [&](const std::string& e) { return !e.empty() && r.original.find(e) != std::string::npos; });
      if (excluded) {
        ++s.excluded_count;
      } else {
        s.malformed.push_back(r);
        malformed_keys.insert(x.key.empty() ? r.original : x.key);
      }
      continue;
    }
    if (excluded_ids.count(*x.id) != 0) {
      ++s.excluded_count;
      continue;
    }
    ids.insert(*x.id);
    if (earliest == nullptr || std::tie(r.timestamp, r.original) < std::tie(earliest->timestamp, earliest->original)) {
      earliest = &r;
    }
  }
  s.unique_ids.assign(ids.begin(), ids.end());
  std::sort(s.malformed.begin(), s.malformed.end());
  if (earliest != nullptr) s.earliest = SnapshotRef{earliest->timestamp, earliest->original, false};
  s.line_count = s.unique_ids.size() + malformed_keys.size();
  return s;
}

enum class CaptureSelection { nearest_after, earliest, latest };

inline std::string to_string(CaptureSelection c) {
  switch (c) {
    case CaptureSelection::nearest_after: return "nearest-after";
    case CaptureSelection::earliest: return "earliest";
    case CaptureSelection::latest: return "latest";
  }
  return "nearest-after";
}

// Picks one timestamp out of the candidates. nearest_after takes the
// smallest at or after `reference`, falling back to the largest.
inline std::optional<std::string> select_capture(std::vector<std::string> timestamps, CaptureSelection policy,
                                                 const std::optional<std::string>& reference) {
  if (timestamps.empty()) return std::nullopt;
  std::sort(timestamps.begin(), timestamps.end());
  switch (policy) {
    case CaptureSelection::earliest: return timestamps.front();
    case CaptureSelection::latest: return timestamps.back();
    case CaptureSelection::nearest_after:
      if (reference) {
        auto it = std::lower_bound(timestamps.begin(), timestamps.end(), *reference);
        if (it != timestamps.end()) return *it;
      }
      return timestamps.back();
  }
  return std::nullopt;
}

struct RoundTripPart {
  std::string uri;
  std::optional<std::uint64_t> live_length;
  std::optional<std::uint64_t> archived_length;
  std::optional<std::string> capture_timestamp;
};

struct RoundTripReport {
  Digest live_digest;
  std::optional<Digest> archived_digest;
  bool identical = false;
  std::vector<std::string> missing_captures;
  std::vector<RoundTripPart> per_part;
  std::optional<std::string> archived_path;
  std::uint64_t archived_total_bytes = 0;
};

// Re-fetches every part of `p` from the archive as raw captures, assembles
// them into `work_dir`, and compares against the live assembly's digest.
inline RoundTripReport roundtrip_verify(const MediaPlaylist& p, const AssemblyReport& live, const ArchiveOptions& opts,
                                        CaptureSelection policy, const fs::path& work_dir) {
  auto entries = manifest_entries(p);
  fs::create_directories(work_dir);

  RoundTripReport report;
  report.live_digest = live.digest;
  report.per_part.resize(entries.size());

  http::ClientOptions replay_client = opts.client;
  replay_client.redirects = http::RedirectPolicy::same_origin;

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < entries.size();) {
      auto& part = report.per_part[i];
      part.uri = entries[i].uri;
      if (live.part_lengths.size() == entries.size()) part.live_length = live.part_lengths[i];
      try {
        auto found = cdx_exact_search(entries[i].uri, opts);
        std::vector<std::string> stamps;
        for (const auto& r : found.records) {
          if (r.original == entries[i].uri && (r.status == "200" || r.status == "-")) stamps.push_back(r.timestamp);
        }
        auto ts = select_capture(stamps, policy, live.fetched_at);
        if (!ts) continue;
        part.capture_timestamp = *ts;
        auto replay = to_replay_url(SnapshotRef{*ts, entries[i].uri, true}, opts.endpoint);
        auto fetched = fetch_segment(replay, replay_client);
        std::ofstream out(work_dir / ("ia-" + entries[i].local_name), std::ios::binary | std::ios::trunc);
        out.write(fetched.bytes.data(), static_cast<std::streamsize>(fetched.bytes.size()));
        out.close();
        if (!out) throw IoError("cannot write replayed part");
        part.archived_length = fetched.bytes.size();
      } catch (const std::exception&) {
        part.archived_length.reset();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::max<std::size_t>(1, std::min(opts.concurrency, entries.size())); ++t) {
    pool.emplace_back(worker);
  }
  for (auto& t : pool) t.join();

  std::vector<fs::path> files;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!report.per_part[i].archived_length) {
      report.missing_captures.push_back(entries[i].uri);
    } else {
      files.push_back(work_dir / ("ia-" + entries[i].local_name));
    }
  }
  if (report.missing_captures.empty() && !files.empty()) {
    auto out = work_dir / "ia-assembled.mp4";
    auto assembled = assemble_files(files, out);
    report.archived_digest = assembled.digest;
    report.archived_path = out.string();
    report.archived_total_bytes = assembled.total_bytes;
    report.identical = assembled.digest == live.digest;
  }
  return report;
}

}  // namespace dmaudit
