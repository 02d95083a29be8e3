#include <algorithm>
#include <random>
#include <set>

#include "catch_amalgamated.hpp"

#include "dmaudit/archive.hpp"
#include "support.hpp"

using namespace dmaudit;

namespace {

ArchiveOptions archive_for(const testing::Mock& m) {
  ArchiveOptions a;
  a.client = m.client;
  return a;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::string line;
  for (char c : text) {
    if (c == '\n') {
      if (!line.empty()) out.push_back(line);
      line.clear();
    } else {
      line += c;
    }
  }
  if (!line.empty()) out.push_back(line);
  return out;
}

const std::string kFixture = testing::read_file(testing::data_path("cdx_dm_video_fixture.txt"));
const std::string kStudyId(reference::kDmId);

std::vector<CdxRecord> dm_records() {
  auto parsed = parse_cdx(kFixture);
  std::erase_if(parsed.records, [](const CdxRecord& r) { return r.original.find("/dm_video/") == std::string::npos; });
  return parsed.records;
}

}  // namespace

TEST_CASE("timestamps") {
  CHECK(is_valid_timestamp("20221208194342"));
  CHECK_FALSE(is_valid_timestamp("2022120819434"));
  CHECK_FALSE(is_valid_timestamp("20221308194342"));
  CHECK_FALSE(is_valid_timestamp("20230229000000"));
  CHECK(is_valid_timestamp("20240229000000"));
  CHECK_FALSE(is_valid_timestamp("2022120819434x"));
  CHECK(format_timestamp(parse_timestamp("20160304122159")) == "20160304122159");
}

TEST_CASE("CDX parsing agrees with a line-splitting oracle") {
  auto parsed = parse_cdx(kFixture);
  auto lines = split_lines(kFixture);
  CHECK(parsed.records.size() + parsed.malformed.size() == lines.size());
  CHECK(parsed.malformed.empty());
  for (std::size_t i = 0; i < lines.size(); ++i) CHECK(format_cdx_line(parsed.records[i]) == lines[i]);

  auto bad = parse_cdx("a b c\n\nk 20221208194342 http://x/ m 200 D 1\nk 2022 http://x/ m 200 D 1\n");
  CHECK(bad.records.size() == 1);
  REQUIRE(bad.malformed.size() == 2);
  CHECK(bad.malformed[0].line == 1);
  CHECK(bad.malformed[1].line == 4);
}

TEST_CASE("replay URLs are a bijection for a fixed endpoint") {
  std::mt19937 rng(5);
  for (int i = 0; i < 500; ++i) {
    SnapshotRef s;
    s.timestamp = format_timestamp(parse_timestamp("20000101000000") + std::chrono::seconds(rng() % 900000000));
    s.original = std::string(rng() % 2 ? "https" : "http") + "://video.twimg.com/dm_video/" + std::to_string(rng()) +
                 "/x.mp4" + (rng() % 2 ? "?tag=1" : "");
    s.raw = rng() % 2;
    for (const char* ep : {"https://web.archive.org", "http://127.0.0.1:9999/", ""}) {
      auto url = to_replay_url(s, ep);
      CHECK(parse_replay_url(url, ep) == s);
    }
  }
  CHECK(to_replay_url({"20221208194342", "https://a/b", true}, "https://web.archive.org") ==
        "https://web.archive.org/web/20221208194342id_/https://a/b");
  CHECK_FALSE(parse_replay_url("https://web.archive.org/web/2022/https://a/", "https://web.archive.org"));
  CHECK_FALSE(parse_replay_url("https://elsewhere/web/20221208194342/https://a/", "https://web.archive.org"));
}

TEST_CASE("media id extraction") {
  MediaIdRule rule;
  CHECK(extract_media_id("https://video.twimg.com/dm_video/123/vid/x.mp4", rule).id == "123");
  CHECK(extract_media_id("https://video.twimg.com/dm_video/0123.mp4?_=1", rule).id == "123");
  auto truncated = extract_media_id("http://video.twimg.com/dm_video/13443", rule);
  CHECK_FALSE(truncated.id);
  CHECK(truncated.key == "13443");
  CHECK_FALSE(extract_media_id("https://video.twimg.com/ext_tw_video/1/x.mp4", rule).id);
  CHECK_FALSE(extract_media_id("https://video.twimg.com/dm_video/abc/x", rule).id);
}

TEST_CASE("survey over the index fixture") {
  auto s = dedupe_by_media_id(dm_records(), MediaIdRule{}, {kStudyId});
  CHECK(s.line_count == 103);
  CHECK(s.unique_ids.size() == 102);
  REQUIRE(s.malformed.size() == 1);
  CHECK(s.malformed[0].original == "http://video.twimg.com/dm_video/13443");
  REQUIRE(s.earliest);
  CHECK(s.earliest->timestamp == "20160304122159");
  CHECK(s.excluded_count > 0);
  for (const auto& id : s.unique_ids) CHECK(id != kStudyId);
  CHECK(std::is_sorted(s.unique_ids.begin(), s.unique_ids.end(), numeric_less));
}

TEST_CASE("dedupe matches a set oracle and ignores input order") {
  auto records = dm_records();
  std::set<std::string> oracle;
  for (const auto& r : records) {
    auto rest = r.original.substr(r.original.find("dm_video/") + 9);
    auto end = rest.find_first_not_of("0123456789");
    if (end != std::string::npos && (rest[end] == '/' || rest[end] == '.') && rest.substr(0, end) != kStudyId) {
      oracle.insert(rest.substr(0, end));
    }
  }
  auto base = dedupe_by_media_id(records, MediaIdRule{}, {kStudyId});
  CHECK(std::set<std::string>(base.unique_ids.begin(), base.unique_ids.end()) == oracle);

  std::mt19937 rng(103);
  for (int i = 0; i < 200; ++i) {
    std::shuffle(records.begin(), records.end(), rng);
    auto s = dedupe_by_media_id(records, MediaIdRule{}, {kStudyId});
    CHECK(s.unique_ids == base.unique_ids);
    CHECK(s.earliest == base.earliest);
    CHECK(s.malformed == base.malformed);
    CHECK(s.line_count == base.line_count);
    CHECK(s.excluded_count == base.excluded_count);
  }
}

TEST_CASE("capture selection") {
  std::vector<std::string> ts = {"20221208194342", "20221201000000", "20221210000000"};
  CHECK(select_capture(ts, CaptureSelection::earliest, std::nullopt) == "20221201000000");
  CHECK(select_capture(ts, CaptureSelection::latest, std::nullopt) == "20221210000000");
  CHECK(select_capture(ts, CaptureSelection::nearest_after, "20221208000000") == "20221208194342");
  CHECK(select_capture(ts, CaptureSelection::nearest_after, "20230101000000") == "20221210000000");
  CHECK_FALSE(select_capture({}, CaptureSelection::latest, std::nullopt));
}

TEST_CASE("save, index and raw replay through the mock") {
  testing::Mock m;
  auto opts = archive_for(m);
  auto url = reference::part_urls()[2];
  auto r = spn_submit(url, opts);
  CHECK(r.accepted);
  REQUIRE(r.snapshot);
  CHECK(r.snapshot->timestamp == "20221208194342");
  CHECK(r.snapshot->original == url);

  auto found = cdx_exact_search(url, opts);
  REQUIRE(found.records.size() == 1);
  CHECK(found.records[0].timestamp == "20221208194342");
  CHECK(found.records[0].length == std::to_string(reference::kPartLengths[2]));

  auto replay = http::get(to_replay_url({r.snapshot->timestamp, url, true}, opts.endpoint), {}, m.client);
  REQUIRE(replay.ok());
  CHECK(replay.response.status == 200);
  CHECK(replay.response.body == reference::part_body(2));

  auto never = http::get(to_replay_url({"20221208194342", url + "x", true}, opts.endpoint), {}, m.client);
  CHECK(never.response.status == 404);

  CHECK_THROWS_AS(spn_submit("not a url", opts), InvalidUri);
}

TEST_CASE("rate limiting surfaces Retry-After and push backs off") {
  testing::Mock m;
  auto opts = archive_for(m);
  m.server.set_save_fault(429, 1, 1);
  try {
    spn_submit(reference::part_urls()[0], opts);
    FAIL("expected rate limiting");
  } catch (const ArchiveError& e) {
    CHECK(e.kind == ArchiveErrorKind::rate_limited);
    CHECK(e.retry_after_seconds == 1);
  }
  m.server.set_save_fault(429, 0, 2);
  auto results = push_all({reference::part_urls()[0], reference::part_urls()[1]}, opts);
  REQUIRE(results.size() == 2);
  CHECK(results[0].accepted);
  CHECK(results[0].attempts == 3);
  CHECK(results[1].accepted);
  CHECK(results[1].attempts == 1);

  m.server.set_save_fault(429, 0, 10);
  opts.max_rate_limit_retries = 1;
  auto gave_up = push_all({reference::part_urls()[0]}, opts);
  CHECK_FALSE(gave_up[0].accepted);
  CHECK(gave_up[0].attempts == 2);
}

TEST_CASE("prefix search pages through resume keys") {
  auto config = reference::scenario(kFixture);
  config.cdx_page_size = 17;
  testing::Mock m(config);
  auto all = cdx_prefix_search("video.twimg.com/dm_video/", archive_for(m));
  CHECK(all.pages > 1);
  auto expected = dm_records();
  CHECK(all.records == expected);
}

TEST_CASE("archive round trip") {
  testing::Mock m;
  auto opts = archive_for(m);
  auto p = parse_media_playlist(reference::kPlaylistText, reference::kPlaylistUrl);
  auto dir = testing::scratch("rt");
  auto parts = fetch_parts_to_dir(manifest_entries(p), dir / "live", m.client);
  std::vector<std::filesystem::path> files;
  for (const auto& r : parts) files.push_back(dir / "live" / r.entry.local_name);
  auto live = assemble_files(files, dir / "live.mp4");
  live.fetched_at = "20221208194342";

  SECTION("identical after pushing every part") {
    auto pushed = push_all(reference::part_urls(), opts);
    for (const auto& r : pushed) CHECK(r.accepted);
    auto rt = roundtrip_verify(p, live, opts, CaptureSelection::nearest_after, dir / "ia");
    CHECK(rt.identical);
    CHECK(rt.missing_captures.empty());
    CHECK(rt.archived_total_bytes == reference::kAssembledLength);
    CHECK(verify_equivalence(dir / "live.mp4", *rt.archived_path).identical);
  }
  SECTION("a missing capture is reported") {
    auto urls = reference::part_urls();
    urls.erase(urls.begin() + 5);
    push_all(urls, opts);
    auto rt = roundtrip_verify(p, live, opts, CaptureSelection::nearest_after, dir / "ia");
    CHECK_FALSE(rt.identical);
    CHECK(rt.missing_captures == std::vector<std::string>{reference::part_urls()[5]});
    CHECK_FALSE(rt.archived_digest);
  }
  SECTION("one corrupted archived byte breaks identity") {
    auto pushed = push_all(reference::part_urls(), opts);
    std::mt19937 rng(9);
    auto k = rng() % pushed.size();
    m.server.corrupt_capture(pushed[k].snapshot->timestamp, pushed[k].uri, rng() % reference::kPartLengths[k]);
    auto rt = roundtrip_verify(p, live, opts, CaptureSelection::nearest_after, dir / "ia");
    CHECK_FALSE(rt.identical);
    CHECK(rt.missing_captures.empty());
    REQUIRE(rt.archived_digest);
    CHECK(*rt.archived_digest != live.digest);
  }
  std::filesystem::remove_all(dir);
}
