#include <random>
#include <thread>

#include "catch_amalgamated.hpp"

#include "dmaudit/assembler.hpp"
#include "support.hpp"

using namespace dmaudit;

namespace {

std::string random_bytes(std::mt19937_64& rng, std::size_t n) {
  std::string s(n, '\0');
  for (auto& c : s) c = static_cast<char>(rng() & 0xff);
  return s;
}

}  // namespace

TEST_CASE("assembly equals naive concatenation over random fixtures") {
  auto dir = testing::scratch("asm");
  std::mt19937_64 rng(406513);
  for (int round = 0; round < 1000; ++round) {
    std::string init = random_bytes(rng, rng() % 64);
    std::vector<std::string> segs(rng() % 8);
    std::uint64_t expected_total = init.size();
    std::string oracle = init;
    for (auto& s : segs) {
      s = random_bytes(rng, rng() % 300);
      expected_total += s.size();
      oracle += s;
    }
    auto out = dir / "a.bin";
    auto r = assemble(init, segs, out);
    REQUIRE(r.part_count == segs.size() + 1);
    REQUIRE(r.total_bytes == expected_total);
    REQUIRE(std::filesystem::file_size(out) == expected_total);
    REQUIRE(r.digest == sha256(oracle));
    REQUIRE(testing::read_file(out) == oracle);

    // Digest equality agrees with byte equality.
    testing::write_file(dir / "oracle.bin", oracle);
    auto same = verify_equivalence(out, dir / "oracle.bin");
    REQUIRE(same.identical);
    if (!oracle.empty()) {
      auto flipped = oracle;
      auto at = rng() % flipped.size();
      flipped[at] = static_cast<char>(flipped[at] ^ (1 + rng() % 255));
      testing::write_file(dir / "flipped.bin", flipped);
      auto diff = verify_equivalence(out, dir / "flipped.bin");
      REQUIRE_FALSE(diff.identical);
      REQUIRE(diff.first_diff_offset == at);
      REQUIRE(sha256(flipped) != r.digest);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("streaming assembly matches in-memory assembly") {
  auto dir = testing::scratch("asm-files");
  std::mt19937_64 rng(3);
  std::vector<std::filesystem::path> files;
  std::vector<std::string> segs;
  for (int i = 0; i < 5; ++i) {
    segs.push_back(random_bytes(rng, 70000 + rng() % 1000));
    files.push_back(dir / (std::to_string(i) + ".part"));
    testing::write_file(files.back(), segs.back());
  }
  auto a = assemble_files(files, dir / "streamed");
  auto b = assemble(segs[0], std::span(segs).subspan(1), dir / "memory");
  CHECK(a.digest == b.digest);
  CHECK(a.part_lengths == b.part_lengths);
  CHECK(verify_equivalence(dir / "streamed", dir / "memory").identical);
  std::filesystem::remove_all(dir);
}

TEST_CASE("equivalence reports a length difference") {
  auto dir = testing::scratch("eq");
  testing::write_file(dir / "a", "abcdef");
  testing::write_file(dir / "b", "abc");
  auto e = verify_equivalence(dir / "a", dir / "b");
  CHECK_FALSE(e.identical);
  CHECK(e.first_diff_offset == 3);
  CHECK(e.length_a == 6);
  CHECK(e.length_b == 3);
  testing::write_file(dir / "c", "");
  testing::write_file(dir / "d", "");
  CHECK(verify_equivalence(dir / "c", dir / "d").identical);
  CHECK_THROWS_AS(verify_equivalence(dir / "a", dir / "missing"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest naming follows the run-me convention") {
  auto p = parse_media_playlist(reference::kPlaylistText, reference::kPlaylistUrl);
  auto entries = manifest_entries(p);
  REQUIRE(entries.size() == 12);
  CHECK(entries[0].local_name == "00.mp4");
  CHECK(entries[1].local_name == "01.m4s");
  CHECK(entries[11].local_name == "11.m4s");
  CHECK(entries[11].uri ==
        "https://video.twimg.com/dm_video/1600877027330064385/vid/30000/32100/320x180/yFOkibojJs9PWhkX.m4s");
  auto text = export_manifest(p);
  CHECK(parse_manifest(text) == entries);
  CHECK(parse_manifest("# comment\n\n" + text) == entries);
  CHECK_THROWS(parse_manifest("../x https://h/a\n"));
  CHECK_THROWS(parse_manifest("justonefield\n"));
  CHECK(parse_manifest("").empty());
}

TEST_CASE("fetching the reference rendition from the mock") {
  testing::Mock m;
  auto p = parse_media_playlist(reference::kPlaylistText, reference::kPlaylistUrl);
  auto dir = testing::scratch("fetch");
  auto results = fetch_parts_to_dir(manifest_entries(p), dir, m.client, 4);
  REQUIRE(results.size() == 12);
  std::vector<std::filesystem::path> files;
  std::string oracle;
  for (std::size_t i = 0; i < results.size(); ++i) {
    CHECK(results[i].ok);
    CHECK(results[i].length == reference::kPartLengths[i]);
    files.push_back(dir / results[i].entry.local_name);
    oracle += reference::part_body(i);
  }
  auto r = assemble_files(files, dir / "out.mp4");
  CHECK(r.total_bytes == reference::kAssembledLength);
  CHECK(r.digest == sha256(oracle));
  std::filesystem::remove_all(dir);
}

TEST_CASE("fetch failures carry status and kind") {
  testing::Mock m;
  auto urls = reference::part_urls();
  m.server.remove_route(parse_uri(urls[3]).path);
  try {
    fetch_segment(urls[3], m.client);
    FAIL("expected FetchError");
  } catch (const FetchError& e) {
    CHECK(e.kind == FetchErrorKind::fetch_failed);
    CHECK(e.status == 404);
    CHECK(e.uri == urls[3]);
  }

  http::Server liar("liar", "127.0.0.1", 0, [](const http::Request&) {
    http::ServerResponse r;
    r.headers.emplace_back("Content-Length", "100");
    r.body = "short";
    return r;
  });
  try {
    http::ClientOptions o;
    o.timeout = std::chrono::milliseconds(2000);
    fetch_segment("http://127.0.0.1:" + std::to_string(liar.port()) + "/x", o);
    FAIL("expected FetchError");
  } catch (const FetchError& e) {
    CHECK(e.kind == FetchErrorKind::length_mismatch);
  }
}

TEST_CASE("file URIs are read from disk") {
  auto dir = testing::scratch("file");
  testing::write_file(dir / "seg.m4s", "abc");
  auto part = fetch_segment("file://" + (dir / "seg.m4s").string(), {});
  CHECK(part.bytes == "abc");
  CHECK_THROWS_AS(fetch_segment("file://" + (dir / "nope").string(), {}), FetchError);
  std::filesystem::remove_all(dir);
}
