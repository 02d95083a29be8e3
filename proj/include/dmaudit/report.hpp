#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmaudit/archive.hpp"
#include "dmaudit/assembler.hpp"
#include "dmaudit/playlist.hpp"
#include "dmaudit/probe.hpp"
#include "dmaudit/tlsaudit.hpp"
#include "dmaudit/version.hpp"

namespace dmaudit {

using nlohmann::json;

namespace http {

inline json headers_to_json(const HeaderList& h) {
  json out = json::array();
  for (const auto& [k, v] : h) out.push_back(json::array({k, v}));
  return out;
}

// Accepts [["Name","value"], ...] or {"Name": "value", ...}.
inline HeaderList headers_from_json(const json& j) {
  HeaderList out;
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) out.emplace_back(k, v.get<std::string>());
    return out;
  }
  for (const auto& pair : j) {
    if (!pair.is_array() || pair.size() != 2) throw std::invalid_argument("header entries must be [name, value]");
    out.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
  }
  return out;
}

}  // namespace http

inline std::string iso8601(std::chrono::system_clock::time_point t) {
  auto ts = format_timestamp(t);
  return ts.substr(0, 4) + "-" + ts.substr(4, 2) + "-" + ts.substr(6, 2) + "T" + ts.substr(8, 2) + ":" +
         ts.substr(10, 2) + ":" + ts.substr(12, 2) + "Z";
}

inline void to_json(json& j, const Digest& d) { j = {{"algorithm", d.algorithm}, {"hex", d.hex}}; }

inline void to_json(json& j, const Segment& s) {
  j = {{"index", s.index}, {"duration", format_seconds(s.duration)}, {"uri", s.uri}};
  if (!s.title.empty()) j["title"] = s.title;
}

inline void to_json(json& j, const MediaPlaylist& p) {
  j = {{"version", p.version},
       {"media_sequence", p.media_sequence},
       {"target_duration", p.target_duration ? json(*p.target_duration) : json(nullptr)},
       {"playlist_type", to_string(p.playlist_type)},
       {"init_section_uri", p.init_section_uri ? json(*p.init_section_uri) : json(nullptr)},
       {"segments", p.segments},
       {"has_endlist", p.has_endlist},
       {"base_uri", p.base_uri},
       {"total_duration", format_seconds(total_duration(p))},
       {"unknown_tags", p.unknown_tags},
       {"warnings", p.warnings}};
}

inline void to_json(json& j, const PathFinding& f) {
  j = {{"kind", to_string(f.kind)}, {"message", f.message}};
  if (f.segment_index) j["segment_index"] = *f.segment_index;
}

inline void to_json(json& j, const HeaderProfile& p) {
  j = {{"name", p.name},
       {"headers", http::headers_to_json(p.headers)},
       {"cookie_role", to_string(p.cookie_role)},
       {"has_referer", p.has_referer}};
}

inline void from_json(const json& j, HeaderProfile& p) {
  p.name = j.at("name").get<std::string>();
  p.headers = http::headers_from_json(j.at("headers"));
  p.cookie_role = cookie_role_from_string(j.at("cookie_role").get<std::string>());
  p.has_referer = j.at("has_referer").get<bool>();
  validate_profile(p);
}

// A profiles document is either an array of profiles or {"profiles": [...]}.
inline std::vector<HeaderProfile> profiles_from_json(const json& j) {
  const json& list = j.is_object() ? j.at("profiles") : j;
  return list.get<std::vector<HeaderProfile>>();
}

inline void to_json(json& j, const ProbeOutcome& o) {
  j = {{"kind", o.is_status() ? std::string("STATUS") : o.label()},
       {"label", o.label()},
       {"elapsed_ms", o.elapsed.count()}};
  if (o.is_status()) j["status"] = o.status;
  if (o.body_length) j["body_length"] = *o.body_length;
  if (o.declared_length) j["declared_length"] = *o.declared_length;
  if (!o.response_headers.empty()) j["response_headers"] = http::headers_to_json(o.response_headers);
  if (!o.error.empty()) j["error"] = o.error;
}

inline void to_json(json& j, const OutcomeMatrix& m) {
  json entries = json::array();
  for (const auto& e : m.entries) entries.push_back({{"profile", e.profile}, {"outcome", e.outcome}});
  j = {{"url", m.url}, {"entries", entries}, {"execution_order", m.execution_order}};
}

inline void to_json(json& j, const VerdictField& f) {
  json ev = json::array();
  for (const auto& e : f.evidence) ev.push_back({{"profile", e.profile}, {"outcome", e.outcome}});
  j = {{"value", f.value == Verdict::indeterminate ? json("INDETERMINATE") : json(f.value == Verdict::yes)},
       {"evidence", ev}};
}

inline void to_json(json& j, const ProtectionProfile& p) {
  j = {{"unauthenticated_access", p.unauthenticated_access},
       {"cookie_required", p.cookie_required},
       {"referer_required", p.referer_required},
       {"party_bound", p.party_bound},
       {"session_liveness_bound", p.session_liveness_bound}};
}

inline void to_json(json& j, const PlainHttpResult& r) {
  j = {{"served", r.served},
       {"http_outcome", r.http_outcome},
       {"https_outcome", r.https_outcome},
       {"lengths_match", r.lengths_match}};
}

inline void to_json(json& j, const AssemblyReport& r) {
  j = {{"part_count", r.part_count},
       {"part_lengths", r.part_lengths},
       {"total_bytes", r.total_bytes},
       {"digest", r.digest},
       {"output_path", r.output_path}};
  if (!r.part_uris.empty()) j["part_uris"] = r.part_uris;
  if (r.fetched_at) j["fetched_at"] = *r.fetched_at;
}

// Reads an assembly section back, either bare or inside a report.
inline AssemblyReport assembly_from_json(const json& doc) {
  const json& j = doc.contains("assembly") ? doc.at("assembly") : doc;
  AssemblyReport r;
  r.part_count = j.at("part_count").get<std::size_t>();
  r.part_lengths = j.at("part_lengths").get<std::vector<std::uint64_t>>();
  r.total_bytes = j.at("total_bytes").get<std::uint64_t>();
  r.digest = Digest{j.at("digest").at("algorithm").get<std::string>(), j.at("digest").at("hex").get<std::string>()};
  r.output_path = j.value("output_path", std::string{});
  r.part_uris = j.value("part_uris", std::vector<std::string>{});
  if (j.contains("fetched_at")) r.fetched_at = j.at("fetched_at").get<std::string>();
  return r;
}

inline void to_json(json& j, const Equivalence& e) {
  j = {{"identical", e.identical}, {"length_a", e.length_a}, {"length_b", e.length_b}};
  if (e.first_diff_offset) j["first_diff_offset"] = *e.first_diff_offset;
}

inline void to_json(json& j, const CdxRecord& r) {
  j = {{"urlkey", r.urlkey},       {"timestamp", r.timestamp}, {"original", r.original}, {"mimetype", r.mimetype},
       {"status", r.status},       {"digest", r.digest},       {"length", r.length}};
}

inline void to_json(json& j, const SnapshotRef& s) {
  j = {{"timestamp", s.timestamp}, {"original", s.original}, {"raw", s.raw}};
}

inline void to_json(json& j, const PushResult& r) {
  j = {{"uri", r.uri}, {"accepted", r.accepted}, {"attempts", r.attempts}};
  if (r.snapshot) j["snapshot"] = *r.snapshot;
  if (!r.error.empty()) j["error"] = r.error;
}

// Full URLs are left out unless show_urls; only ids, counts and timestamps.
inline json survey_to_json(const SurveySummary& s, const CdxParseResult& parsed, bool show_urls) {
  json malformed = json::array();
  for (const auto& r : s.malformed) {
    json m = {{"timestamp", r.timestamp}, {"status", r.status}};
    m["key"] = extract_media_id(r.original, MediaIdRule{}).key;
    if (show_urls) m["original"] = r.original;
    malformed.push_back(m);
  }
  json earliest = nullptr;
  if (s.earliest) {
    earliest = {{"timestamp", s.earliest->timestamp}};
    auto id = extract_media_id(s.earliest->original, MediaIdRule{});
    if (id.id) earliest["media_id"] = *id.id;
    if (show_urls) earliest["original"] = s.earliest->original;
  }
  json cdx_malformed = json::array();
  for (const auto& m : parsed.malformed) {
    json e = {{"line", m.line}, {"reason", m.reason}};
    if (show_urls) e["text"] = m.text;
    cdx_malformed.push_back(e);
  }
  return {{"line_count", s.line_count},
          {"unique_id_count", s.unique_ids.size()},
          {"unique_ids", s.unique_ids},
          {"record_count", s.record_count},
          {"excluded_count", s.excluded_count},
          {"earliest", earliest},
          {"malformed", malformed},
          {"cdx_malformed_lines", cdx_malformed},
          {"pages", parsed.pages},
          {"urls_redacted", !show_urls}};
}

inline void to_json(json& j, const RoundTripPart& p) {
  j = {{"uri", p.uri}};
  j["live_length"] = p.live_length ? json(*p.live_length) : json(nullptr);
  j["archived_length"] = p.archived_length ? json(*p.archived_length) : json(nullptr);
  j["capture_timestamp"] = p.capture_timestamp ? json(*p.capture_timestamp) : json(nullptr);
}

inline void to_json(json& j, const RoundTripReport& r) {
  j = {{"live_digest", r.live_digest},
       {"archived_digest", r.archived_digest ? json(*r.archived_digest) : json(nullptr)},
       {"identical", r.identical},
       {"missing_captures", r.missing_captures},
       {"per_part", r.per_part},
       {"archived_total_bytes", r.archived_total_bytes}};
  if (r.archived_path) j["archived_path"] = *r.archived_path;
}

inline void to_json(json& j, const StsPolicy& s) {
  j = {{"max_age", s.max_age}, {"include_subdomains", s.include_subdomains}, {"preload", s.preload}, {"raw", s.raw}};
}

inline void to_json(json& j, const PreloadStatus& p) {
  j = {{"host_listed", p.host_listed},
       {"matched_parent", p.matched_parent ? json(*p.matched_parent) : json(nullptr)}};
}

inline void to_json(json& j, const HttpsEnforcementReport& r) {
  j = {{"verdict", to_string(r.verdict)}, {"findings", r.findings}};
}

}  // namespace dmaudit
