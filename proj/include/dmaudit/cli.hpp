#pragma once

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <pthread.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "dmaudit/archive.hpp"
#include "dmaudit/assembler.hpp"
#include "dmaudit/mockserver.hpp"
#include "dmaudit/playlist.hpp"
#include "dmaudit/probe.hpp"
#include "dmaudit/reference.hpp"
#include "dmaudit/report.hpp"
#include "dmaudit/tlsaudit.hpp"
#include "dmaudit/version.hpp"

namespace dmaudit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitInsufficientEvidence = 2;
inline constexpr int kExitUsage = 64;

class UsageError : public Error {
 public:
  using Error::Error;
};

// Report outcome -> process exit code. The only place exit codes are decided
// for commands that produced a report.
inline int exit_code_for(std::string_view outcome) {
  if (outcome == "ok" || outcome == "partial_push") return kExitOk;
  if (outcome == "insufficient_evidence") return kExitInsufficientEvidence;
  if (outcome == "fetch_failed" || outcome == "not_identical" || outcome == "query_failed") return kExitFailed;
  return kExitFailed;
}

struct AuditReport {
  std::string command;
  std::string target;
  std::string started_at;
  std::string finished_at;
  std::string outcome = "ok";
  std::optional<json> playlist;
  std::optional<OutcomeMatrix> matrix;
  std::optional<ProtectionProfile> protection;
  std::optional<json> https;
  std::optional<AssemblyReport> assembly;
  std::optional<json> failed_parts;
  std::optional<RoundTripReport> roundtrip;
  std::optional<json> push;
  std::optional<json> survey;
  std::vector<std::string> warnings;

  json to_json() const {
    json j = {{"schema_version", kReportSchemaVersion},
              {"tool_version", kVersion},
              {"command", command},
              {"target", target},
              {"started_at", started_at},
              {"finished_at", finished_at},
              {"outcome", outcome},
              {"exit_code", exit_code_for(outcome)},
              {"warnings", warnings}};
    if (playlist) j["playlist"] = *playlist;
    if (matrix) j["matrix"] = *matrix;
    if (protection) j["protection"] = *protection;
    if (https) j["https"] = *https;
    if (assembly) j["assembly"] = *assembly;
    if (failed_parts) j["failed_parts"] = *failed_parts;
    if (roundtrip) j["roundtrip"] = *roundtrip;
    if (push) j["push"] = *push;
    if (survey) j["survey"] = *survey;
    return j;
  }
};

namespace detail {

inline std::string now_iso() { return iso8601(std::chrono::system_clock::now()); }

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw UsageError(path + ": " + e.what());
  }
}

// Settings shared by every network command.
struct Common {
  std::vector<std::string> endpoint_specs;
  std::string config_path;
  bool yes_external = false;
  int timeout_ms = 10000;
  std::string archive_endpoint = "https://web.archive.org";

  http::EndpointMap endpoints;
  json config = json::object();

  void load() {
    if (!config_path.empty()) config = read_json(config_path);
    if (config.contains("endpoints")) {
      for (const auto& [origin, target] : config.at("endpoints").items()) {
        endpoints.add_spec(origin + "=" + target.get<std::string>());
      }
    }
    for (const auto& s : endpoint_specs) {
      try {
        endpoints.add_spec(s);
      } catch (const std::exception& e) {
        throw UsageError("--endpoint " + s + ": " + e.what());
      }
    }
    if (config.contains("archive_endpoint") && archive_endpoint == "https://web.archive.org") {
      archive_endpoint = config.at("archive_endpoint").get<std::string>();
    }
    if (config.contains("timeout_ms") && timeout_ms == 10000) timeout_ms = config.at("timeout_ms").get<int>();
  }

  http::ClientOptions client() const {
    http::ClientOptions c;
    c.timeout = milliseconds{timeout_ms};
    c.endpoints = endpoints;
    c.allow_external = yes_external;
    return c;
  }

  // Refuses, before any traffic, to reach a non-loopback host unless the
  // operator opted in.
  void require_consent(const std::vector<std::string>& urls) const {
    if (yes_external) return;
    for (const auto& u : urls) {
      Uri parsed;
      try {
        parsed = parse_absolute_uri(u);
      } catch (const InvalidUri& e) {
        throw UsageError(std::string("invalid URL: ") + e.what());
      }
      if (http::is_external(parsed, endpoints)) {
        throw UsageError("refusing to contact " + parsed.host() +
                         " (not loopback); pass --yes-external to allow, or map it with --endpoint");
      }
    }
  }

  ArchiveOptions archive() const {
    ArchiveOptions a;
    a.endpoint = archive_endpoint;
    a.client = client();
    if (config.contains("spn_interval_ms")) a.spn_interval = milliseconds{config.at("spn_interval_ms").get<int>()};
    return a;
  }
};

inline void add_common(CLI::App* cmd, Common& c, bool archive) {
  cmd->add_option("--endpoint", c.endpoint_specs, "Route ORIGIN to HOST:PORT over plain HTTP (repeatable)")
      ->type_name("ORIGIN=HOST:PORT");
  cmd->add_option("--config", c.config_path, "JSON config: endpoints, profiles, credentials, pacing");
  cmd->add_flag("--yes-external", c.yes_external, "Allow contacting non-loopback hosts");
  cmd->add_option("--timeout", c.timeout_ms, "Per-request timeout in milliseconds")->check(CLI::PositiveNumber);
  if (archive) cmd->add_option("--archive-endpoint", c.archive_endpoint, "Web archive base URL");
}

inline bool is_url(std::string_view s) { return s.find("://") != std::string_view::npos; }

inline std::string file_uri(const std::string& path) {
  return "file://" + percent_encode(fs::absolute(path).lexically_normal().string(), "/");
}

// Loads a playlist from a URL or a local file. Returns (text, base URI).
inline std::pair<std::string, std::string> load_playlist(const std::string& source, const std::string& base,
                                                         const Common& c) {
  if (!is_url(source)) return {read_text(source), base.empty() ? file_uri(source) : base};
  c.require_consent({source});
  auto r = http::get(source, default_probe_headers(), c.client());
  if (!r.ok()) throw FetchError(FetchErrorKind::fetch_failed, 0, source, "playlist " + source + ": " + r.error);
  if (r.response.status != 200) {
    throw FetchError(FetchErrorKind::fetch_failed, r.response.status, source,
                     "playlist " + source + ": HTTP " + std::to_string(r.response.status));
  }
  return {r.response.body, base.empty() ? source : base};
}

inline std::vector<std::string> part_uris(const MediaPlaylist& p) {
  std::vector<std::string> out;
  for (const auto& e : manifest_entries(p)) out.push_back(e.uri);
  return out;
}

inline void emit(const AuditReport& r, std::ostream& out) { out << r.to_json().dump(2) << "\n"; }

}  // namespace detail

inline int cmd_playlist(const std::string& source, const std::string& base, detail::Common& c, std::ostream& out,
                        std::ostream& err) {
  AuditReport report;
  report.command = "playlist";
  report.target = source;
  report.started_at = detail::now_iso();
  auto [text, b] = detail::load_playlist(source, base, c);
  auto p = parse_media_playlist(text, b);
  json pj = p;
  pj["path_findings"] = lint_dm_path_convention(p);
  report.playlist = pj;
  report.warnings = p.warnings;
  report.finished_at = detail::now_iso();
  detail::emit(report, out);
  err << "playlist: " << p.segments.size() << " segments, " << format_seconds(total_duration(p)) << " s"
      << (p.init_section_uri ? ", init section" : "") << "\n";
  return exit_code_for(report.outcome);
}

inline int cmd_probe(const std::string& url, const std::string& profiles_path, const MatrixCredentials& creds,
                     detail::Common& c, std::ostream& out, std::ostream& err) {
  AuditReport report;
  report.command = "probe";
  report.target = url;
  report.started_at = detail::now_iso();

  std::vector<HeaderProfile> profiles;
  try {
    if (!profiles_path.empty()) {
      profiles = profiles_from_json(detail::read_json(profiles_path));
    } else if (c.config.contains("profiles")) {
      profiles = profiles_from_json(c.config.at("profiles"));
    } else {
      // flags win over config values
      MatrixCredentials merged = creds;
      const MatrixCredentials unset;
      const json cfg = c.config.value("credentials", json::object());
      auto take = [&](std::string& field, const std::string& fallback, const char* key) {
        if (field == fallback && cfg.contains(key)) field = cfg.at(key).get<std::string>();
      };
      take(merged.session_cookie, unset.session_cookie, "session_cookie");
      take(merged.third_party_cookie, unset.third_party_cookie, "third_party_cookie");
      take(merged.expired_cookie, unset.expired_cookie, "expired_cookie");
      take(merged.referer, unset.referer, "referer");
      profiles = build_default_matrix(merged);
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(std::string("profiles: ") + e.what());
  }
  c.require_consent({url});

  ProbeLimits limits;
  limits.client = c.client();
  if (c.config.contains("inter_probe_delay_ms")) {
    limits.inter_probe_delay = milliseconds{c.config.at("inter_probe_delay_ms").get<int>()};
  }
  auto matrix = run_matrix(url, profiles, limits);
  report.matrix = matrix;
  try {
    report.protection = classify(matrix);
  } catch (const InsufficientEvidence& e) {
    report.outcome = "insufficient_evidence";
    report.warnings.push_back(e.what());
  }
  report.finished_at = detail::now_iso();
  detail::emit(report, out);

  for (const auto& e : matrix.entries) err << e.profile << ": " << e.outcome.label() << "\n";
  if (report.protection) {
    err << "unauthenticated_access=" << to_string(report.protection->unauthenticated_access.value)
        << " cookie_required=" << to_string(report.protection->cookie_required.value)
        << " referer_required=" << to_string(report.protection->referer_required.value)
        << " party_bound=" << to_string(report.protection->party_bound.value)
        << " session_liveness_bound=" << to_string(report.protection->session_liveness_bound.value) << "\n";
  }
  return exit_code_for(report.outcome);
}

struct AssembleArgs {
  std::string source;
  std::string out;
  std::string base;
  std::size_t concurrency = 4;
  bool keep_parts = false;
  std::string manifest_out;
};

inline int cmd_assemble(const AssembleArgs& a, detail::Common& c, std::ostream& out, std::ostream& err) {
  AuditReport report;
  report.command = "assemble";
  report.target = a.source;
  report.started_at = detail::now_iso();

  auto [text, base] = detail::load_playlist(a.source, a.base, c);
  auto p = parse_media_playlist(text, base);
  report.warnings = p.warnings;
  auto entries = manifest_entries(p);
  if (entries.empty()) throw UsageError("playlist lists no init section and no segments");
  c.require_consent(detail::part_uris(p));
  if (!a.manifest_out.empty()) {
    std::ofstream m(a.manifest_out);
    m << export_manifest(p);
    if (!m) throw IoError("cannot write " + a.manifest_out);
  }

  fs::path output = a.out;
  fs::path parts_dir = output.string() + ".parts";
  fs::path partial_dir = output.string() + ".partial";
  fs::remove_all(parts_dir);
  auto fetched_at = format_timestamp(std::chrono::system_clock::now());
  auto results = fetch_parts_to_dir(entries, parts_dir, c.client(), a.concurrency);

  json failed = json::array();
  for (const auto& r : results) {
    if (!r.ok) failed.push_back({{"uri", r.entry.uri}, {"local_name", r.entry.local_name}, {"status", r.status},
                                 {"error", r.error}});
  }
  if (!failed.empty()) {
    fs::remove_all(partial_dir);
    fs::rename(parts_dir, partial_dir);
    report.outcome = "fetch_failed";
    report.failed_parts = failed;
    report.warnings.push_back("fetched parts kept in " + partial_dir.string());
    report.finished_at = detail::now_iso();
    detail::emit(report, out);
    for (const auto& f : failed) err << "failed: " << f.at("uri").get<std::string>() << " (" << f.at("error").get<std::string>() << ")\n";
    return exit_code_for(report.outcome);
  }

  std::vector<fs::path> files;
  for (const auto& e : entries) files.push_back(parts_dir / e.local_name);
  auto assembly = assemble_files(files, output);
  assembly.part_uris = detail::part_uris(p);
  assembly.fetched_at = fetched_at;
  if (!a.keep_parts) fs::remove_all(parts_dir);
  report.assembly = assembly;
  report.finished_at = detail::now_iso();
  detail::emit(report, out);
  err << "assembled " << assembly.part_count << " parts, " << assembly.total_bytes << " bytes -> " << output.string()
      << "\nsha256 " << assembly.digest.hex << "\n";
  return exit_code_for(report.outcome);
}

inline int cmd_archive_push(const std::string& manifest_path, detail::Common& c, std::ostream& out,
                            std::ostream& err) {
  AuditReport report;
  report.command = "archive push";
  report.target = manifest_path;
  report.started_at = detail::now_iso();
  std::vector<ManifestEntry> entries;
  try {
    entries = parse_manifest(detail::read_text(manifest_path));
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(std::string("manifest: ") + e.what());
  }
  std::vector<std::string> uris;
  for (const auto& e : entries) uris.push_back(e.uri);
  if (!uris.empty()) c.require_consent({c.archive_endpoint});

  auto results = push_all(uris, c.archive());
  std::size_t accepted = 0;
  for (const auto& r : results) {
    if (r.accepted) {
      ++accepted;
    } else {
      report.warnings.push_back("not archived: " + r.uri + ": " + r.error);
    }
  }
  if (accepted != results.size()) report.outcome = "partial_push";
  report.push = json{{"endpoint", c.archive_endpoint},
                     {"submitted", results.size()},
                     {"accepted", accepted},
                     {"results", results}};
  report.finished_at = detail::now_iso();
  detail::emit(report, out);
  err << "archive push: " << accepted << "/" << results.size() << " accepted\n";
  return exit_code_for(report.outcome);
}

struct SurveyArgs {
  std::string prefix;
  std::vector<std::string> exclude;
  bool show_urls = false;
  std::string cdx_file;
  std::string marker = "dm_video/";
};

inline int cmd_archive_survey(const SurveyArgs& a, detail::Common& c, std::ostream& out, std::ostream& err) {
  AuditReport report;
  report.command = "archive survey";
  report.target = a.prefix;
  report.started_at = detail::now_iso();
  CdxParseResult parsed;
  if (!a.cdx_file.empty()) {
    parsed = parse_cdx(detail::read_text(a.cdx_file));
    auto want = ascii_lower(a.prefix);
    std::erase_if(parsed.records, [&](const CdxRecord& r) {
      std::string o = ascii_lower(r.original);
      for (std::string_view s : {"https://", "http://"}) {
        if (o.rfind(s, 0) == 0) o.erase(0, s.size());
      }
      return o.rfind(want, 0) != 0;
    });
  } else {
    c.require_consent({c.archive_endpoint});
    try {
      parsed = cdx_prefix_search(a.prefix, c.archive());
    } catch (const ArchiveError& e) {
      report.outcome = "query_failed";
      report.warnings.push_back(e.what());
      report.finished_at = detail::now_iso();
      detail::emit(report, out);
      err << e.what() << "\n";
      return exit_code_for(report.outcome);
    }
  }
  auto summary = dedupe_by_media_id(parsed.records, MediaIdRule{a.marker}, a.exclude);
  report.survey = survey_to_json(summary, parsed, a.show_urls);
  if (!parsed.malformed.empty()) {
    report.warnings.push_back(std::to_string(parsed.malformed.size()) + " unparseable CDX lines");
  }
  report.finished_at = detail::now_iso();
  detail::emit(report, out);
  err << "archive survey: " << summary.line_count << " lines (" << summary.unique_ids.size() << " ids, "
      << summary.malformed.size() << " malformed captures), excluded " << summary.excluded_count;
  if (summary.earliest) err << ", earliest " << summary.earliest->timestamp;
  err << "\n";
  return exit_code_for(report.outcome);
}

struct VerifyArgs {
  std::string playlist;
  std::string live_report;
  std::string base;
  std::string policy = "nearest-after";
  std::string work_dir = "dmaudit-verify";
};

inline CaptureSelection policy_from_string(const std::string& s) {
  if (s == "nearest-after") return CaptureSelection::nearest_after;
  if (s == "earliest") return CaptureSelection::earliest;
  if (s == "latest") return CaptureSelection::latest;
  throw UsageError("--policy must be nearest-after, earliest or latest");
}

inline int cmd_archive_verify(const VerifyArgs& a, detail::Common& c, std::ostream& out, std::ostream& err) {
  AuditReport report;
  report.command = "archive verify";
  report.target = a.playlist;
  report.started_at = detail::now_iso();
  auto policy = policy_from_string(a.policy);
  AssemblyReport live;
  try {
    live = assembly_from_json(detail::read_json(a.live_report));
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError("live report " + a.live_report + ": " + e.what());
  }
  auto [text, base] = detail::load_playlist(a.playlist, a.base, c);
  auto p = parse_media_playlist(text, base);
  c.require_consent({c.archive_endpoint});
  auto rt = roundtrip_verify(p, live, c.archive(), policy, a.work_dir);
  report.roundtrip = rt;
  if (!rt.identical) report.outcome = "not_identical";
  for (const auto& m : rt.missing_captures) report.warnings.push_back("no capture of " + m);
  report.finished_at = detail::now_iso();
  detail::emit(report, out);
  err << (rt.identical ? "archived copy is identical" : "archived copy differs or is incomplete") << " ("
      << rt.missing_captures.size() << " parts missing)\n";
  return exit_code_for(report.outcome);
}

struct TlsArgs {
  std::string url;
  std::string preload_snapshot;
  std::string csp;
  std::string csp_self = "https://twitter.com";
};

inline int cmd_tls_audit(const TlsArgs& a, detail::Common& c, std::ostream& out, std::ostream& err) {
  AuditReport report;
  report.command = "tls-audit";
  report.target = a.url;
  report.started_at = detail::now_iso();
  Uri target;
  try {
    target = parse_absolute_uri(a.url);
  } catch (const InvalidUri& e) {
    throw UsageError(std::string("invalid URL: ") + e.what());
  }
  if (ascii_lower(target.scheme) != "https") throw UsageError("tls-audit needs an https URL");
  Uri plain = target.with_scheme("http");
  if (auto port = target.explicit_port(); port && *port == 443) plain.authority = target.host();
  std::optional<CspConnectSrc> csp;
  if (!a.csp.empty()) {
    csp = parse_csp_connect_src(a.csp);
    if (!csp) throw UsageError("--csp has no connect-src directive");
  }
  std::vector<PreloadEntry> snapshot;
  if (!a.preload_snapshot.empty()) {
    snapshot = parse_preload_snapshot(detail::read_text(a.preload_snapshot));
  } else {
    report.warnings.push_back("no preload snapshot given; host treated as not preloaded");
  }
  c.require_consent({a.url, plain.str()});

  ProbeLimits limits;
  limits.client = c.client();
  auto plain_result = check_plain_http(a.url, limits);
  std::optional<StsPolicy> sts;
  json sts_json = nullptr;
  if (plain_result.https_outcome.is_status()) {
    if (auto v = http::find_header(plain_result.https_outcome.response_headers, "strict-transport-security")) {
      try {
        sts = parse_sts(*v);
        sts_json = *sts;
      } catch (const MalformedSts& e) {
        report.warnings.push_back(std::string("ignoring malformed STS header: ") + e.what());
      }
    }
  } else {
    report.warnings.push_back("https request failed: " + plain_result.https_outcome.label());
  }
  auto preload = preload_status(target.host(), snapshot);
  auto verdict = evaluate_https_enforcement(plain_result, sts, preload);

  json https = verdict;
  https["plain_http"] = plain_result;
  https["sts"] = sts_json;
  https["preload"] = preload;
  if (csp) {
    https["csp"] = {{"policy", a.csp},
                    {"self", a.csp_self},
                    {"https_url", a.url},
                    {"https_allowed", csp_connect_src_allows(*csp, a.url, a.csp_self)},
                    {"http_url", plain.str()},
                    {"http_allowed", csp_connect_src_allows(*csp, plain.str(), a.csp_self)}};
  }
  report.https = https;
  report.finished_at = detail::now_iso();
  detail::emit(report, out);
  err << target.host() << ": " << to_string(verdict.verdict) << "\n";
  for (const auto& f : verdict.findings) err << "  " << f << "\n";
  return exit_code_for(report.outcome);
}

struct MockArgs {
  std::string scenario;
  std::string cdx_file;
  std::string bind = "127.0.0.1";
  std::uint16_t https_port = 0;
  std::uint16_t http_port = 0;
  bool no_plain = false;
  std::size_t cdx_page_size = 0;
};

// Serves until SIGINT or SIGTERM. The first stdout line is a JSON object
// with the bound ports and ready-made --endpoint flags.
inline int cmd_mock_serve(const MockArgs& a, std::ostream& out, std::ostream& err) {
  mock::ScenarioConfig config;
  std::string cdx = a.cdx_file.empty() ? std::string{} : detail::read_text(a.cdx_file);
  if (!a.scenario.empty()) {
    try {
      config = mock::scenario_from_json(detail::read_json(a.scenario), fs::path(a.scenario).parent_path());
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception& e) {
      throw UsageError("scenario " + a.scenario + ": " + e.what());
    }
    config.cdx_lines += cdx;
  } else {
    config = reference::scenario(cdx);
  }
  if (a.no_plain) config.plain_listener = false;
  if (a.cdx_page_size > 0) config.cdx_page_size = a.cdx_page_size;

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  mock::MockServer server(config, a.bind, a.https_port, a.http_port);
  json ready = {{"https_role_port", server.https_port()},
                {"http_role_port", server.http_port() ? json(*server.http_port()) : json(nullptr)},
                {"bind", a.bind}};
  json flags = json::array();
  auto endpoints = server.endpoints(reference::hosts());
  for (const auto& [origin, addr] : endpoints.entries()) {
    flags.push_back(origin + "=" + addr.host + ":" + std::to_string(addr.port));
  }
  ready["endpoints"] = flags;
  out << ready.dump() << std::endl;
  err << "mock serving on " << a.bind << ":" << server.https_port() << " (https-role)";
  if (server.http_port()) err << " and :" << *server.http_port() << " (http-role)";
  err << "; Ctrl-C to stop" << std::endl;

  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  return kExitOk;
}

namespace detail {

// CLI11's own --help-all stops one level down; this walks every subcommand.
inline void print_help_tree(const CLI::App& app, std::ostream& out) {
  out << app.help();
  for (const auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) {
    out << "\n";
    print_help_tree(*sub, out);
  }
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audit access control, archiving and transport security of web media URLs", "dmaudit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  app.require_subcommand(1);

  detail::Common common;

  std::string pl_source, pl_base;
  auto* playlist = app.add_subcommand("playlist", "Parse a media playlist and print its model");
  playlist->add_option("source", pl_source, "Playlist URL or file")->required();
  playlist->add_option("--base", pl_base, "Base URI for resolving relative references");
  detail::add_common(playlist, common, false);

  std::string probe_url, profiles_path;
  MatrixCredentials creds;
  auto* probe = app.add_subcommand("probe", "Probe a URL under the header-profile matrix and classify it");
  probe->add_option("url", probe_url, "Target URL")->required();
  probe->add_option("--profiles", profiles_path, "JSON file with header profiles");
  probe->add_option("--session-cookie", creds.session_cookie, "Cookie header of a session party");
  probe->add_option("--third-party-cookie", creds.third_party_cookie, "Cookie header of a non-party account");
  probe->add_option("--expired-cookie", creds.expired_cookie, "Cookie header from an expired session");
  probe->add_option("--referer", creds.referer, "Referer sent by the profiles that carry one");
  detail::add_common(probe, common, false);

  AssembleArgs asm_args;
  auto* assemble_cmd = app.add_subcommand("assemble", "Fetch every part of a playlist and concatenate them");
  assemble_cmd->add_option("source", asm_args.source, "Playlist URL or file")->required();
  assemble_cmd->add_option("--out", asm_args.out, "Output file")->required();
  assemble_cmd->add_option("--base", asm_args.base, "Base URI for resolving relative references");
  assemble_cmd->add_option("--concurrency", asm_args.concurrency, "Parallel part downloads")->check(CLI::Range(1, 64));
  assemble_cmd->add_flag("--keep-parts", asm_args.keep_parts, "Keep downloaded parts in <out>.parts/");
  assemble_cmd->add_option("--manifest", asm_args.manifest_out, "Also write the part manifest here");
  detail::add_common(assemble_cmd, common, false);

  auto* archive = app.add_subcommand("archive", "Web archive operations");
  archive->require_subcommand(1);

  std::string push_manifest;
  auto* push = archive->add_subcommand("push", "Submit every manifest URI for capture");
  push->add_option("manifest", push_manifest, "Manifest file (<name> <uri> per line)")->required();
  detail::add_common(push, common, true);

  SurveyArgs survey_args;
  auto* survey = archive->add_subcommand("survey", "Count distinct media ids captured under a URL prefix");
  survey->add_option("prefix", survey_args.prefix, "URL prefix, e.g. video.twimg.com/dm_video/")->required();
  survey->add_option("--exclude", survey_args.exclude, "Media id to leave out (repeatable)");
  survey->add_flag("--show-urls", survey_args.show_urls, "Include full capture URLs in the report");
  survey->add_option("--cdx-file", survey_args.cdx_file, "Read CDX lines from a file instead of querying");
  survey->add_option("--marker", survey_args.marker, "Path marker that precedes the media id");
  detail::add_common(survey, common, true);

  VerifyArgs verify_args;
  auto* verify = archive->add_subcommand("verify", "Rebuild the video from raw captures and compare");
  verify->add_option("playlist", verify_args.playlist, "Playlist URL or file")->required();
  verify->add_option("live-report", verify_args.live_report, "JSON report from assemble")->required();
  verify->add_option("--base", verify_args.base, "Base URI for resolving relative references");
  verify->add_option("--policy", verify_args.policy, "Capture choice: nearest-after, earliest or latest");
  verify->add_option("--work-dir", verify_args.work_dir, "Directory for replayed parts");
  detail::add_common(verify, common, true);

  TlsArgs tls_args;
  auto* tls = app.add_subcommand("tls-audit", "Check whether a host enforces HTTPS");
  tls->add_option("url", tls_args.url, "https URL to audit")->required();
  tls->add_option("--preload-snapshot", tls_args.preload_snapshot, "Local HSTS preload list snapshot");
  tls->add_option("--csp", tls_args.csp, "Policy whose connect-src is evaluated for the URL and its http twin");
  tls->add_option("--csp-self", tls_args.csp_self, "Origin that 'self' stands for");
  detail::add_common(tls, common, false);

  MockArgs mock_args;
  auto* mock_cmd = app.add_subcommand("mock", "Offline stand-in server");
  mock_cmd->require_subcommand(1);
  auto* serve = mock_cmd->add_subcommand("serve", "Run the mock until interrupted");
  serve->add_option("--scenario", mock_args.scenario, "Scenario JSON (default: built-in reference scenario)");
  serve->add_option("--cdx-file", mock_args.cdx_file, "Preload the CDX index from this file");
  serve->add_option("--bind", mock_args.bind, "Listen address");
  serve->add_option("--https-port", mock_args.https_port, "Port of the https-role listener (0: any)");
  serve->add_option("--http-port", mock_args.http_port, "Port of the http-role listener (0: any)");
  serve->add_flag("--no-plain", mock_args.no_plain, "Do not run the http-role listener");
  serve->add_option("--cdx-page-size", mock_args.cdx_page_size, "Lines per CDX page when resume keys are requested");

  for (int i = 1; i < argc; ++i) {
    if (std::string_view(argv[i]) == "--help-all") {
      detail::print_help_tree(app, out);
      return kExitOk;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    common.load();
    if (playlist->parsed()) return cmd_playlist(pl_source, pl_base, common, out, err);
    if (probe->parsed()) return cmd_probe(probe_url, profiles_path, creds, common, out, err);
    if (assemble_cmd->parsed()) return cmd_assemble(asm_args, common, out, err);
    if (push->parsed()) return cmd_archive_push(push_manifest, common, out, err);
    if (survey->parsed()) return cmd_archive_survey(survey_args, common, out, err);
    if (verify->parsed()) return cmd_archive_verify(verify_args, common, out, err);
    if (tls->parsed()) return cmd_tls_audit(tls_args, common, out, err);
    if (serve->parsed()) return cmd_mock_serve(mock_args, out, err);
  } catch (const UsageError& e) {
    err << "dmaudit: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidUri& e) {
    err << "dmaudit: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FetchError& e) {
    err << "dmaudit: " << e.what() << "\n";
    return kExitFailed;
  } catch (const PlaylistError& e) {
    err << "dmaudit: " << e.what() << "\n";
    return kExitFailed;
  } catch (const std::exception& e) {
    err << "dmaudit: " << e.what() << "\n";
    return kExitFailed;
  }
  return kExitUsage;
}

}  // namespace dmaudit::cli
