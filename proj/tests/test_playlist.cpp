#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "catch_amalgamated.hpp"

#include "dmaudit/playlist.hpp"
#include "dmaudit/reference.hpp"

using namespace dmaudit;
using std::chrono::milliseconds;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kBase(reference::kPlaylistUrl);

MediaPlaylist reference_playlist() { return parse_media_playlist(reference::kPlaylistText, kBase); }

PlaylistErrorKind error_of(std::string_view text) {
  try {
    parse_media_playlist(text, "https://h/p.m3u8");
  } catch (const PlaylistError& e) {
    return e.kind;
  }
  FAIL("expected a PlaylistError for:\n" << text);
  return PlaylistErrorKind::missing_header;
}

// Random well-formed playlists.
std::string random_playlist(std::mt19937& rng) {
  std::string s = "#EXTM3U\n";
  if (rng() % 2) s += "#EXT-X-VERSION:" + std::to_string(1 + rng() % 7) + "\n";
  s += "#EXT-X-TARGETDURATION:" + std::to_string(2 + rng() % 6) + "\n";
  if (rng() % 2) s += "#EXT-X-MEDIA-SEQUENCE:" + std::to_string(rng() % 1000) + "\n";
  if (rng() % 2) s += std::string("#EXT-X-PLAYLIST-TYPE:") + (rng() % 2 ? "VOD" : "EVENT") + "\n";
  if (rng() % 2) s += "#EXT-X-MAP:URI=\"init-" + std::to_string(rng() % 99) + ".mp4\"\n";
  if (rng() % 3 == 0) s += "#EXT-X-INDEPENDENT-SEGMENTS\n";
  int n = static_cast<int>(rng() % 20);
  for (int i = 0; i < n; ++i) {
    s += "#EXTINF:" + std::to_string(1 + rng() % 3) + "." + std::to_string(rng() % 1000) + ",\n";
    switch (rng() % 3) {
      case 0: s += "seg" + std::to_string(i) + ".m4s\n"; break;
      case 1: s += "/abs/path/" + std::to_string(i) + ".m4s\n"; break;
      default: s += "https://cdn.example/x/" + std::to_string(i) + ".m4s?t=1\n"; break;
    }
  }
  if (rng() % 4 != 0) s += "#EXT-X-ENDLIST\n";
  return s;
}

}  // namespace

TEST_CASE("the reference playlist parses to its published shape") {
  auto text = read_file(std::filesystem::path(DMAUDIT_DATA_DIR) / "reference_playlist.m3u8");
  REQUIRE(text.size() == 1177);
  REQUIRE(text == reference::kPlaylistText);
  auto p = parse_media_playlist(text, kBase);
  CHECK(p.version == 6);
  CHECK(p.media_sequence == 0);
  CHECK(p.target_duration == 3);
  CHECK(p.playlist_type == PlaylistType::vod);
  CHECK(p.init_section_uri ==
        "https://video.twimg.com/dm_video/1600877027330064385/vid/0/0/320x180/jZY0JeLERXPOC4qe.mp4");
  REQUIRE(p.segments.size() == 11);
  for (std::size_t i = 0; i < 10; ++i) CHECK(p.segments[i].duration == milliseconds{3000});
  CHECK(p.segments[10].duration == milliseconds{2100});
  CHECK(p.has_endlist);
  CHECK(p.is_complete());
  CHECK(total_duration(p) == milliseconds{32100});
  CHECK(p.segments[0].uri ==
        "https://video.twimg.com/dm_video/1600877027330064385/vid/0/3000/320x180/1lmZtezFzjRRYziE.m4s");
  CHECK(p.warnings.empty());
  CHECK(p.unknown_tags.empty());
  CHECK(lint_dm_path_convention(p).empty());
}

TEST_CASE("minimal playlist") {
  auto p = parse_media_playlist("#EXTM3U\n#EXT-X-ENDLIST\n", "https://h/p.m3u8");
  CHECK(p.segments.empty());
  CHECK_FALSE(p.init_section_uri);
  CHECK(p.has_endlist);
  CHECK(total_duration(p) == milliseconds{0});
}

TEST_CASE("CRLF, BOM and unknown tags") {
  std::string text = "\xEF\xBB\xBF#EXTM3U\r\n#EXT-X-TARGETDURATION:4\r\n#EXT-X-FOO:bar=1\r\n#EXTINF:3.5,\r\na.m4s\r\n";
  auto p = parse_media_playlist(text, "https://h/dir/p.m3u8");
  REQUIRE(p.segments.size() == 1);
  CHECK(p.segments[0].uri == "https://h/dir/a.m4s");
  CHECK(p.segments[0].duration == milliseconds{3500});
  CHECK(p.unknown_tags == std::vector<std::string>{"#EXT-X-FOO:bar=1"});
}

TEST_CASE("parse errors carry their kind") {
  CHECK(error_of("#EXT-X-VERSION:3\n") == PlaylistErrorKind::missing_header);
  CHECK(error_of("") == PlaylistErrorKind::missing_header);
  CHECK(error_of("#EXTM3U\n#EXTINF:abc,\na.m4s\n") == PlaylistErrorKind::malformed_tag);
  CHECK(error_of("#EXTM3U\n#EXTINF:0,\na.m4s\n") == PlaylistErrorKind::malformed_tag);
  CHECK(error_of("#EXTM3U\n#EXTINF:-1,\na.m4s\n") == PlaylistErrorKind::malformed_tag);
  CHECK(error_of("#EXTM3U\n#EXT-X-MAP:URI=unquoted\n") == PlaylistErrorKind::malformed_tag);
  CHECK(error_of("#EXTM3U\n#EXT-X-MAP:BYTERANGE=\"1@0\"\n") == PlaylistErrorKind::malformed_tag);
  CHECK(error_of("#EXTM3U\n#EXTINF:3,\n") == PlaylistErrorKind::dangling_extinf);
  CHECK(error_of("#EXTM3U\n#EXTINF:3,\n#EXTINF:3,\na.m4s\n") == PlaylistErrorKind::dangling_extinf);
  CHECK(error_of("#EXTM3U\n#EXT-X-STREAM-INF:BANDWIDTH=1\nv.m3u8\n") == PlaylistErrorKind::malformed_tag);
}

TEST_CASE("lint warnings do not fail the parse") {
  auto p = parse_media_playlist("#EXTM3U\n#EXT-X-TARGETDURATION:2\n#EXT-X-PLAYLIST-TYPE:VOD\n#EXTINF:3.000,\na\n",
                                "https://h/p");
  CHECK(p.segments.size() == 1);
  CHECK(p.warnings.size() == 2);  // over target, VOD without ENDLIST
  CHECK_FALSE(p.is_complete());
}

TEST_CASE("serialize then parse is a fixed point") {
  auto first = reference_playlist();
  auto again = parse_media_playlist(serialize_media_playlist(first), kBase);
  CHECK(again == first);

  std::mt19937 rng(11);
  for (int i = 0; i < 300; ++i) {
    auto text = random_playlist(rng);
    auto p = parse_media_playlist(text, "https://origin.example/a/b/list.m3u8?x=1");
    auto q = parse_media_playlist(serialize_media_playlist(p), p.base_uri);
    INFO(text);
    CHECK(q == p);
    CHECK(serialize_media_playlist(q) == serialize_media_playlist(p));
  }
}

TEST_CASE("order and totality over random playlists") {
  std::mt19937 rng(12);
  for (int i = 0; i < 300; ++i) {
    auto p = parse_media_playlist(random_playlist(rng), "https://origin.example/a/list.m3u8");
    milliseconds sum{0};
    for (std::size_t k = 0; k < p.segments.size(); ++k) {
      CHECK(p.segments[k].index == k);
      CHECK(p.segments[k].duration > milliseconds{0});
      CHECK(parse_uri(p.segments[k].uri).is_absolute());
      sum += p.segments[k].duration;
    }
    CHECK(total_duration(p) == sum);
  }
}

TEST_CASE("decimal durations keep millisecond precision") {
  auto p = parse_media_playlist("#EXTM3U\n#EXTINF:2.1,\na\n#EXTINF:0.001,\nb\n#EXTINF:4,\nc\n", "https://h/");
  CHECK(p.segments[0].duration == milliseconds{2100});
  CHECK(p.segments[1].duration == milliseconds{1});
  CHECK(p.segments[2].duration == milliseconds{4000});
  CHECK(format_seconds(milliseconds{32100}) == "32.100");
}

TEST_CASE("path convention lint catches injected faults") {
  auto text = std::string(reference::kPlaylistText);

  SECTION("duration mismatch") {
    auto broken = text;
    broken.replace(broken.find("#EXTINF:2.100"), 13, "#EXTINF:2.500");
    auto f = lint_dm_path_convention(parse_media_playlist(broken, kBase));
    REQUIRE(f.size() == 1);
    CHECK(f[0].kind == PathFindingKind::duration_mismatch);
    CHECK(f[0].segment_index == 10);
  }
  SECTION("gap between ranges") {
    auto broken = text;
    broken.replace(broken.find("/vid/3000/6000/"), 15, "/vid/3100/6100/");
    auto f = lint_dm_path_convention(parse_media_playlist(broken, kBase));
    std::vector<PathFindingKind> kinds;
    for (const auto& x : f) kinds.push_back(x.kind);
    CHECK(std::count(kinds.begin(), kinds.end(), PathFindingKind::gap) == 2);
  }
  SECTION("no convention") {
    auto p = parse_media_playlist("#EXTM3U\n#EXTINF:3,\na.m4s\n", "https://h/");
    auto f = lint_dm_path_convention(p);
    REQUIRE(f.size() == 1);
    CHECK(f[0].kind == PathFindingKind::convention_not_detected);
  }
}
