#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dmaudit/error.hpp"
#include "dmaudit/uri.hpp"

namespace dmaudit {

using std::chrono::milliseconds;

enum class PlaylistType { unspecified, vod, event };

inline std::string to_string(PlaylistType t) {
  switch (t) {
    case PlaylistType::vod: return "VOD";
    case PlaylistType::event: return "EVENT";
    case PlaylistType::unspecified: break;
  }
  return "unspecified";
}

struct Segment {
  std::size_t index = 0;
  milliseconds duration{0};
  std::string title;
  std::string uri;  // absolute

  friend bool operator==(const Segment&, const Segment&) = default;
};

// An HLS Media Playlist for fragmented MP4: one optional initialization
// section (EXT-X-MAP) and ordered media segments, all URIs resolved.
struct MediaPlaylist {
  int version = 1;
  std::int64_t media_sequence = 0;
  std::optional<int> target_duration;
  PlaylistType playlist_type = PlaylistType::unspecified;
  std::optional<std::string> init_section_uri;
  std::optional<std::string> init_section_byterange;
  std::vector<Segment> segments;
  bool has_endlist = false;
  std::string base_uri;
  std::vector<std::string> unknown_tags;  // verbatim lines
  std::vector<std::string> warnings;      // lint, never fatal

  // A VOD playlist is complete only once it carries EXT-X-ENDLIST.
  bool is_complete() const { return has_endlist; }

  friend bool operator==(const MediaPlaylist&, const MediaPlaylist&) = default;
};

// "3.000" style rendering of a millisecond count.
inline std::string format_seconds(milliseconds d) {
  auto ms = d.count();
  std::string sign = ms < 0 ? "-" : "";
  if (ms < 0) ms = -ms;
  std::string frac = std::to_string(ms % 1000);
  return sign + std::to_string(ms / 1000) + "." + std::string(3 - frac.size(), '0') + frac;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  Int value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

// Non-negative decimal seconds to milliseconds, rounding half up past the
// third fractional digit.
inline std::optional<milliseconds> parse_decimal_seconds(std::string_view s) {
  auto dot = s.find('.');
  auto whole = s.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (whole.empty() && frac.empty()) return std::nullopt;
  for (char c : whole) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  for (char c : frac) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  if (whole.size() > 12) return std::nullopt;
  std::int64_t ms = whole.empty() ? 0 : *parse_int<std::int64_t>(whole) * 1000;
  std::int64_t scale = 100;
  for (std::size_t i = 0; i < frac.size() && i < 3; ++i, scale /= 10) ms += (frac[i] - '0') * scale;
  if (frac.size() > 3 && frac[3] >= '5') ms += 1;
  return milliseconds{ms};
}

struct Attribute {
  std::string name;
  std::string value;
  bool quoted = false;
};
using AttributeList = std::vector<Attribute>;

// attribute-list grammar: NAME=value pairs, comma separated, values either
// quoted-strings or unquoted tokens without commas or whitespace.
inline std::optional<AttributeList> parse_attribute_list(std::string_view s) {
  AttributeList out;
  while (!s.empty()) {
    auto eq = s.find('=');
    if (eq == std::string_view::npos || eq == 0) return std::nullopt;
    auto name = s.substr(0, eq);
    for (char c : name) {
      if (!((c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-')) return std::nullopt;
    }
    s.remove_prefix(eq + 1);
    std::string value;
    bool quoted = !s.empty() && s.front() == '"';
    if (quoted) {
      auto close = s.find('"', 1);
      if (close == std::string_view::npos) return std::nullopt;
      value = std::string(s.substr(1, close - 1));
      s.remove_prefix(close + 1);
    } else {
      auto comma = s.find(',');
      value = std::string(s.substr(0, comma));
      if (value.empty() || value.find_first_of(" \t\"") != std::string::npos) return std::nullopt;
      s.remove_prefix(comma == std::string_view::npos ? s.size() : comma);
    }
    out.push_back({std::string(name), std::move(value), quoted});
    if (!s.empty()) {
      if (s.front() != ',' || s.size() == 1) return std::nullopt;
      s.remove_prefix(1);
    }
  }
  return out;
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

}  // namespace detail

// Parses a Media Playlist body and resolves every URI against `base`.
// Throws PlaylistError (MissingHeader, MalformedTag, DanglingExtinf);
// throws InvalidUri only when `base` itself is not an absolute URI.
inline MediaPlaylist parse_media_playlist(std::string_view text, std::string_view base) {
  using detail::starts_with;
  const Uri base_uri = parse_absolute_uri(base);

  MediaPlaylist p;
  p.base_uri = std::string(base);

  auto malformed = [](std::size_t line, const std::string& what) {
    return PlaylistError(PlaylistErrorKind::malformed_tag, line, what);
  };
  auto resolve = [&](std::size_t line, std::string_view ref) {
    try {
      return resolve_uri(base_uri, parse_uri(ref)).str();
    } catch (const InvalidUri& e) {
      throw malformed(line, e.what());
    }
  };

  if (starts_with(text, "\xEF\xBB\xBF")) text.remove_prefix(3);

  struct Pending {
    milliseconds duration;
    std::string title;
    std::size_t line;
  };
  std::optional<Pending> pending;
  std::size_t line_no = 0;
  bool saw_header = false;

  while (!text.empty() || line_no == 0) {
    auto nl = text.find('\n');
    std::string_view line = detail::trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;

    if (!saw_header) {
      if (line != "#EXTM3U") {
        throw PlaylistError(PlaylistErrorKind::missing_header, line_no, "first line is not #EXTM3U");
      }
      saw_header = true;
      continue;
    }
    if (line.empty()) continue;

    if (line.front() != '#') {
      if (!pending) throw malformed(line_no, "URI line without a preceding #EXTINF");
      p.segments.push_back(Segment{p.segments.size(), pending->duration, std::move(pending->title),
                                   resolve(line_no, line)});
      pending.reset();
      continue;
    }
    if (!starts_with(line, "#EXT")) continue;  // comment

    auto colon = line.find(':');
    std::string_view tag = line.substr(0, colon);
    std::string_view value = colon == std::string_view::npos ? std::string_view{} : line.substr(colon + 1);

    auto integer_value = [&](auto type_tag) {
      using Int = decltype(type_tag);
      auto v = detail::parse_int<Int>(value);
      if (!v || *v < 0) throw malformed(line_no, std::string(tag) + " needs a non-negative integer");
      return *v;
    };

    if (tag == "#EXTINF") {
      if (pending) {
        throw PlaylistError(PlaylistErrorKind::dangling_extinf, pending->line,
                            "#EXTINF followed by another #EXTINF");
      }
      auto comma = value.find(',');
      auto duration = detail::parse_decimal_seconds(detail::trim(value.substr(0, comma)));
      if (!duration || duration->count() <= 0) {
        throw malformed(line_no, "unparseable #EXTINF duration \"" + std::string(value) + "\"");
      }
      std::string title = comma == std::string_view::npos ? std::string{} : std::string(value.substr(comma + 1));
      pending = Pending{*duration, std::move(title), line_no};
    } else if (tag == "#EXT-X-MAP") {
      auto attrs = detail::parse_attribute_list(value);
      if (!attrs) throw malformed(line_no, "bad #EXT-X-MAP attribute list");
      std::optional<std::string> uri;
      for (auto& a : *attrs) {
        if (a.name == "URI") {
          if (!a.quoted) throw malformed(line_no, "#EXT-X-MAP URI must be a quoted-string");
          uri = a.value;
        }
        if (a.name == "BYTERANGE") p.init_section_byterange = a.value;
      }
      if (!uri || uri->empty()) throw malformed(line_no, "#EXT-X-MAP without URI");
      p.init_section_uri = resolve(line_no, *uri);
    } else if (tag == "#EXT-X-VERSION") {
      p.version = integer_value(int{});
    } else if (tag == "#EXT-X-MEDIA-SEQUENCE") {
      p.media_sequence = integer_value(std::int64_t{});
    } else if (tag == "#EXT-X-TARGETDURATION") {
      p.target_duration = integer_value(int{});
    } else if (tag == "#EXT-X-PLAYLIST-TYPE") {
      if (value == "VOD") {
        p.playlist_type = PlaylistType::vod;
      } else if (value == "EVENT") {
        p.playlist_type = PlaylistType::event;
      } else {
        throw malformed(line_no, "unknown playlist type \"" + std::string(value) + "\"");
      }
    } else if (tag == "#EXT-X-ENDLIST") {
      p.has_endlist = true;
    } else if (tag == "#EXT-X-STREAM-INF" || tag == "#EXT-X-I-FRAME-STREAM-INF" ||
               tag == "#EXT-X-MEDIA") {
      throw malformed(line_no, "master playlist not supported");
    } else {
      p.unknown_tags.emplace_back(line);
    }
  }

  if (pending) {
    throw PlaylistError(PlaylistErrorKind::dangling_extinf, pending->line,
                        "#EXTINF without a following URI line");
  }

  for (const auto& s : p.segments) {
    // RFC 8216: EXTINF rounded to the nearest integer must not exceed the target.
    auto rounded = (s.duration.count() + 500) / 1000;
    if (p.target_duration && rounded > *p.target_duration) {
      p.warnings.push_back("segment " + std::to_string(s.index) + " duration " +
                           format_seconds(s.duration) + " exceeds target duration " +
                           std::to_string(*p.target_duration));
    }
  }
  if (!p.segments.empty() && !p.target_duration) {
    p.warnings.push_back("segments present but #EXT-X-TARGETDURATION missing");
  }
  if (p.playlist_type == PlaylistType::vod && !p.has_endlist) {
    p.warnings.push_back("VOD playlist without #EXT-X-ENDLIST is incomplete");
  }
  return p;
}

// Canonical text form. Parsing the output with the same base yields a
// playlist equal to the input.
inline std::string serialize_media_playlist(const MediaPlaylist& p) {
  std::string out = "#EXTM3U\n";
  out += "#EXT-X-VERSION:" + std::to_string(p.version) + "\n";
  out += "#EXT-X-MEDIA-SEQUENCE:" + std::to_string(p.media_sequence) + "\n";
  if (p.target_duration) out += "#EXT-X-TARGETDURATION:" + std::to_string(*p.target_duration) + "\n";
  if (p.playlist_type != PlaylistType::unspecified) {
    out += "#EXT-X-PLAYLIST-TYPE:" + to_string(p.playlist_type) + "\n";
  }
  if (p.init_section_uri) {
    out += "#EXT-X-MAP:URI=\"" + *p.init_section_uri + "\"";
    if (p.init_section_byterange) out += ",BYTERANGE=\"" + *p.init_section_byterange + "\"";
    out += "\n";
  }
  for (const auto& tag : p.unknown_tags) out += tag + "\n";
  for (const auto& s : p.segments) {
    out += "#EXTINF:" + format_seconds(s.duration) + "," + s.title + "\n";
    out += s.uri + "\n";
  }
  if (p.has_endlist) out += "#EXT-X-ENDLIST\n";
  return out;
}

inline milliseconds total_duration(const MediaPlaylist& p) {
  milliseconds total{0};
  for (const auto& s : p.segments) total += s.duration;
  return total;
}

enum class PathFindingKind { convention_not_detected, not_following, duration_mismatch, gap };

inline std::string to_string(PathFindingKind k) {
  switch (k) {
    case PathFindingKind::convention_not_detected: return "convention_not_detected";
    case PathFindingKind::not_following: return "not_following";
    case PathFindingKind::duration_mismatch: return "duration_mismatch";
    case PathFindingKind::gap: return "gap";
  }
  return "unknown";
}

struct PathFinding {
  PathFindingKind kind;
  std::optional<std::size_t> segment_index;
  std::string message;
};

// Checks the `/vid/<start_ms>/<end_ms>/` path convention some CDNs use for
// segment names against the EXTINF durations: end - start must equal the
// duration, and each segment must start where the previous one ended.
inline std::vector<PathFinding> lint_dm_path_convention(const MediaPlaylist& p) {
  static const std::regex kRange(R"(/vid/(\d+)/(\d+)/)");
  struct Range {
    std::int64_t start, end;
  };
  std::vector<std::optional<Range>> ranges;
  std::size_t matched = 0;
  for (const auto& s : p.segments) {
    std::smatch m;
    std::string path = parse_uri(s.uri).path;
    if (std::regex_search(path, m, kRange)) {
      ranges.push_back(Range{std::stoll(m[1]), std::stoll(m[2])});
      ++matched;
    } else {
      ranges.push_back(std::nullopt);
    }
  }

  std::vector<PathFinding> findings;
  if (matched == 0) {
    findings.push_back({PathFindingKind::convention_not_detected, std::nullopt,
                        "no segment path matches /vid/<start_ms>/<end_ms>/"});
    return findings;
  }

  std::int64_t previous_end = -1;  // none yet
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const auto& seg = p.segments[i];
    if (!ranges[i]) {
      findings.push_back({PathFindingKind::not_following, i, "segment path lacks /vid/<start>/<end>/"});
      previous_end = -1;
      continue;
    }
    auto [start, end] = *ranges[i];
    if (end - start != seg.duration.count()) {
      findings.push_back({PathFindingKind::duration_mismatch, i,
                          "path range " + std::to_string(start) + "-" + std::to_string(end) +
                              " is " + format_seconds(milliseconds{end - start}) + " s but EXTINF says " +
                              format_seconds(seg.duration) + " s"});
    }
    if (previous_end >= 0 && previous_end != start) {
      findings.push_back({PathFindingKind::gap, i,
                          "range starts at " + std::to_string(start) + " but previous ended at " +
                              std::to_string(previous_end)});
    }
    previous_end = end;
  }
  return findings;
}

}  // namespace dmaudit
