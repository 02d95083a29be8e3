#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "dmaudit/digest.hpp"
#include "dmaudit/error.hpp"
#include "dmaudit/http.hpp"
#include "dmaudit/playlist.hpp"
#include "dmaudit/probe.hpp"

namespace dmaudit {

namespace fs = std::filesystem;

struct FetchedPart {
  std::string uri;
  std::string bytes;
  http::HeaderList headers;
};

namespace detail {

inline std::string read_whole_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

}  // namespace detail

// GET without credentials. file:// URIs are read from disk.
inline FetchedPart fetch_segment(std::string_view uri, const http::ClientOptions& opts) {
  Uri u = parse_absolute_uri(uri);
  if (ascii_lower(u.scheme) == "file") {
    fs::path path = percent_decode(u.path);
    if (!fs::exists(path)) throw FetchError(FetchErrorKind::fetch_failed, 404, std::string(uri), "no such file " + path.string());
    return FetchedPart{std::string(uri), detail::read_whole_file(path), {}};
  }
  auto r = http::get(u, default_probe_headers(), opts);
  if (!r.ok()) {
    throw FetchError(FetchErrorKind::fetch_failed, 0, std::string(uri), "fetch " + std::string(uri) + ": " + r.error);
  }
  if (r.response.status != 200) {
    throw FetchError(FetchErrorKind::fetch_failed, r.response.status, std::string(uri),
                     "fetch " + std::string(uri) + ": HTTP " + std::to_string(r.response.status));
  }
  if (r.response.declared_length && *r.response.declared_length != r.response.body.size()) {
    throw FetchError(FetchErrorKind::length_mismatch, 200, std::string(uri),
                     "fetch " + std::string(uri) + ": received " + std::to_string(r.response.body.size()) +
                         " of " + std::to_string(*r.response.declared_length) + " declared bytes");
  }
  return FetchedPart{std::string(uri), std::move(r.response.body), std::move(r.response.headers)};
}

struct AssemblyReport {
  std::size_t part_count = 0;
  std::vector<std::uint64_t> part_lengths;
  std::uint64_t total_bytes = 0;
  Digest digest;
  std::string output_path;
  std::vector<std::string> part_uris;  // when known, same order as part_lengths
  std::optional<std::string> fetched_at;  // 14-digit UTC timestamp of the live fetch
};

namespace detail {

class DigestingWriter {
 public:
  explicit DigestingWriter(const fs::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot create " + path.string());
  }

  void write(std::string_view data) {
    out_.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out_) throw IoError("write failed: " + path_.string());
    hasher_.update(data);
  }

  Digest close() {
    out_.close();
    if (!out_) throw IoError("close failed: " + path_.string());
    return hasher_.finish();
  }

 private:
  fs::path path_;
  std::ofstream out_;
  Hasher hasher_;
};

}  // namespace detail

// Writes init followed by every segment, in the given order.
inline AssemblyReport assemble(std::string_view init, std::span<const std::string> segments,
                               const fs::path& output) {
  detail::DigestingWriter w(output);
  AssemblyReport r;
  r.output_path = output.string();
  w.write(init);
  r.part_lengths.push_back(init.size());
  for (const auto& s : segments) {
    w.write(s);
    r.part_lengths.push_back(s.size());
  }
  r.digest = w.close();
  r.part_count = r.part_lengths.size();
  for (auto n : r.part_lengths) r.total_bytes += n;
  return r;
}

// Streaming variant over part files; memory use is one buffer.
inline AssemblyReport assemble_files(std::span<const fs::path> parts, const fs::path& output) {
  if (parts.empty()) throw IoError("nothing to assemble");
  detail::DigestingWriter w(output);
  AssemblyReport r;
  r.output_path = output.string();
  std::array<char, 1 << 16> buf{};
  for (const auto& part : parts) {
    std::ifstream in(part, std::ios::binary);
    if (!in) throw IoError("cannot open " + part.string());
    std::uint64_t n = 0;
    while (in) {
      in.read(buf.data(), buf.size());
      auto got = static_cast<std::size_t>(in.gcount());
      w.write(std::string_view(buf.data(), got));
      n += got;
    }
    if (in.bad()) throw IoError("read failed: " + part.string());
    r.part_lengths.push_back(n);
  }
  r.digest = w.close();
  r.part_count = r.part_lengths.size();
  for (auto n : r.part_lengths) r.total_bytes += n;
  return r;
}

struct Equivalence {
  bool identical = false;
  std::optional<std::uint64_t> first_diff_offset;
  std::uint64_t length_a = 0;
  std::uint64_t length_b = 0;
};

inline Equivalence verify_equivalence(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary);
  std::ifstream fb(b, std::ios::binary);
  if (!fa) throw IoError("cannot open " + a.string());
  if (!fb) throw IoError("cannot open " + b.string());
  Equivalence e;
  e.length_a = fs::file_size(a);
  e.length_b = fs::file_size(b);

  std::array<char, 1 << 16> ba{}, bb{};
  std::uint64_t offset = 0;
  for (;;) {
    fa.read(ba.data(), ba.size());
    fb.read(bb.data(), bb.size());
    auto na = static_cast<std::size_t>(fa.gcount());
    auto nb = static_cast<std::size_t>(fb.gcount());
    auto common = std::min(na, nb);
    auto mismatch = std::mismatch(ba.begin(), ba.begin() + common, bb.begin());
    if (mismatch.first != ba.begin() + common) {
      e.first_diff_offset = offset + static_cast<std::uint64_t>(mismatch.first - ba.begin());
      return e;
    }
    if (na != nb) {
      e.first_diff_offset = offset + common;
      return e;
    }
    if (na == 0) break;
    offset += na;
  }
  if (fa.bad() || fb.bad()) throw IoError("read failed comparing " + a.string() + " and " + b.string());
  e.identical = e.length_a == e.length_b;
  if (!e.identical) e.first_diff_offset = std::min(e.length_a, e.length_b);
  return e;
}

struct ManifestEntry {
  std::string local_name;
  std::string uri;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

namespace detail {

inline std::string part_name(std::size_t index, std::size_t count, std::string_view ext) {
  std::size_t width = std::max<std::size_t>(2, std::to_string(count == 0 ? 0 : count - 1).size());
  std::string n = std::to_string(index);
  return std::string(width - std::min(width, n.size()), '0') + n + std::string(ext);
}

}  // namespace detail

// Init section as 00.mp4, segment i as <i+1>.m4s, zero padded.
inline std::vector<ManifestEntry> manifest_entries(const MediaPlaylist& p) {
  std::vector<ManifestEntry> out;
  std::size_t count = p.segments.size() + 1;
  if (p.init_section_uri) out.push_back({detail::part_name(0, count, ".mp4"), *p.init_section_uri});
  for (const auto& s : p.segments) out.push_back({detail::part_name(s.index + 1, count, ".m4s"), s.uri});
  return out;
}

// One "<local-name> <uri>" line per part, init first.
inline std::string export_manifest(const MediaPlaylist& p) {
  std::string out;
  for (const auto& e : manifest_entries(p)) out += e.local_name + " " + e.uri + "\n";
  return out;
}

inline std::vector<ManifestEntry> parse_manifest(std::string_view text) {
  std::vector<ManifestEntry> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = detail::trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto sp = line.find_first_of(" \t");
    if (sp == std::string_view::npos) throw Error("manifest line " + std::to_string(line_no) + ": expected '<name> <uri>'");
    std::string name(line.substr(0, sp));
    std::string uri(detail::trim(line.substr(sp)));
    if (name.find('/') != std::string::npos || name == "." || name == "..") {
      throw Error("manifest line " + std::to_string(line_no) + ": local name must be a plain file name");
    }
    parse_absolute_uri(uri);
    out.push_back({std::move(name), std::move(uri)});
  }
  return out;
}

struct PartFetchResult {
  ManifestEntry entry;
  bool ok = false;
  std::uint64_t length = 0;
  int status = 0;
  std::string error;
};

// Downloads every entry into `dir` with at most `concurrency` transfers in
// flight. Results keep manifest order regardless of completion order.
inline std::vector<PartFetchResult> fetch_parts_to_dir(const std::vector<ManifestEntry>& entries, const fs::path& dir,
                                                       const http::ClientOptions& opts, std::size_t concurrency = 4) {
  fs::create_directories(dir);
  std::vector<PartFetchResult> results(entries.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < entries.size();) {
      auto& r = results[i];
      r.entry = entries[i];
      try {
        auto part = fetch_segment(entries[i].uri, opts);
        std::ofstream out(dir / entries[i].local_name, std::ios::binary | std::ios::trunc);
        out.write(part.bytes.data(), static_cast<std::streamsize>(part.bytes.size()));
        out.close();
        if (!out) throw IoError("cannot write " + (dir / entries[i].local_name).string());
        r.ok = true;
        r.status = 200;
        r.length = part.bytes.size();
      } catch (const FetchError& e) {
        r.status = e.status;
        r.error = e.what();
      } catch (const std::exception& e) {
        r.error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::max<std::size_t>(1, std::min(concurrency, entries.size())); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace dmaudit
