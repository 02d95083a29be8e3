#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dmaudit/mockserver.hpp"
#include "dmaudit/playlist.hpp"
#include "dmaudit/probe.hpp"

// The DM-session environment the mock reproduces: one image shared in an
// active session, one video rendition of 12 parts, two extra sessions whose
// cookies play the third-party and expired roles.
namespace dmaudit::reference {

inline constexpr std::string_view kVideoHost = "video.twimg.com";
inline constexpr std::string_view kImageHost = "ton.twitter.com";
inline constexpr std::string_view kArchiveHost = "web.archive.org";
inline constexpr std::string_view kSiteHost = "twitter.com";

inline constexpr std::string_view kDmId = "1600877027330064385";
inline constexpr std::string_view kPlaylistPath = "/dm_video/1600877027330064385/pl/320x180/Vn4h391lbQ0jfr1D.m3u8";
inline constexpr std::string_view kPlaylistUrl =
    "https://video.twimg.com/dm_video/1600877027330064385/pl/320x180/Vn4h391lbQ0jfr1D.m3u8?container=fmp4";
inline constexpr std::string_view kImagePath =
    "/i/ton/data/dm/1600870219324465156/1600870190459256832/KM0EBzij.jpg:small";
inline constexpr std::string_view kImageUrl =
    "https://ton.twitter.com/i/ton/data/dm/1600870219324465156/1600870190459256832/KM0EBzij.jpg:small";
inline constexpr std::size_t kImageLength = 22425;

inline constexpr std::string_view kStsValue = "max-age=631138519";
inline constexpr std::string_view kCspValue =
    "connect-src 'self' blob: https://api.twitter.com https://*.twimg.com https://*.twitter.com; "
    "default-src 'self'";
inline constexpr std::string_view kFirstCapture = "20221208194342";

inline constexpr std::array<std::uint64_t, 12> kPartLengths = {1130,  37919, 35423, 36960, 43395, 47333,
                                                               41711, 38884, 36449, 32279, 32413, 22617};
inline constexpr std::uint64_t kAssembledLength = 406513;

inline constexpr std::string_view kPlaylistText =
    "#EXTM3U\n"
    "#EXT-X-VERSION:6\n"
    "#EXT-X-MEDIA-SEQUENCE:0\n"
    "#EXT-X-TARGETDURATION:3\n"
    "#EXT-X-PLAYLIST-TYPE:VOD\n"
    "#EXT-X-MAP:URI=\"/dm_video/1600877027330064385/vid/0/0/320x180/jZY0JeLERXPOC4qe.mp4\"\n"
    "#EXTINF:3.000,\n"
    "/dm_video/1600877027330064385/vid/0/3000/320x180/1lmZtezFzjRRYziE.m4s\n"
    "#EXTINF:3.000,\n"
    "/dm_video/1600877027330064385/vid/3000/6000/320x180/yxhsDmzuJG9ZqtYb.m4s\n"
    "#EXTINF:3.000,\n"
    "/dm_video/1600877027330064385/vid/6000/9000/320x180/KGtEzr2KaRfP4Y6H.m4s\n"
    "#EXTINF:3.000,\n"
    "/dm_video/1600877027330064385/vid/9000/12000/320x180/V1cXuDCxjXKk_JT9.m4s\n"
    "#EXTINF:3.000,\n"
    "/dm_video/1600877027330064385/vid/12000/15000/320x180/CtUTfpf83EHjEFjd.m4s\n"
    "#EXTINF:3.000,\n"
    "/dm_video/1600877027330064385/vid/15000/18000/320x180/lGncur15MHC6fvKg.m4s\n"
    "#EXTINF:3.000,\n"
    "/dm_video/1600877027330064385/vid/18000/21000/320x180/2U51PtuljYpAxxRr.m4s\n"
    "#EXTINF:3.000,\n"
    "/dm_video/1600877027330064385/vid/21000/24000/320x180/gs-8pNvThX_1kjx0.m4s\n"
    "#EXTINF:3.000,\n"
    "/dm_video/1600877027330064385/vid/24000/27000/320x180/f1UDV6NW3odTL-ux.m4s\n"
    "#EXTINF:3.000,\n"
    "/dm_video/1600877027330064385/vid/27000/30000/320x180/9hFdPsP3QYV8c130.m4s\n"
    "#EXTINF:2.100,\n"
    "/dm_video/1600877027330064385/vid/30000/32100/320x180/yFOkibojJs9PWhkX.m4s\n"
    "#EXT-X-ENDLIST\n";

// Session ids and cookie tokens (synthetic).
inline constexpr std::string_view kActiveSession = "dm-1600870219324465156";
inline constexpr std::string_view kEarlierSession = "dm-1600710747004305409";
inline constexpr std::string_view kOtherSession = "dm-kitten2017";
inline constexpr std::string_view kOwnerToken = "wk0f57cc642e5efc86e77113c4c6e26e63";
inline constexpr std::string_view kPeerToken = "bk637657abf4a99fb7ee02b978448244f0";
inline constexpr std::string_view kExpiredToken = "wk88ba7e40f9067e00000000000000000a";
inline constexpr std::string_view kThirdPartyToken = "kt40a7ccfc93b1d2000000000000000000";

inline std::vector<std::string> hosts() {
  return {std::string(kVideoHost), std::string(kImageHost), std::string(kArchiveHost), std::string(kSiteHost)};
}

inline std::string cookie_header(std::string_view token) {
  return "guest_id=v1%3A167051518741457080; lang=en; auth_token=" + std::string(token) + "; twid=u%3D1600710747004305409";
}

inline MatrixCredentials credentials() {
  MatrixCredentials c;
  c.session_cookie = cookie_header(kOwnerToken);
  c.third_party_cookie = cookie_header(kThirdPartyToken);
  c.expired_cookie = cookie_header(kExpiredToken);
  c.referer = "https://twitter.com/";
  return c;
}

// Parts of the rendition, init first, resolved against the playlist URL.
inline std::vector<std::string> part_urls() {
  auto p = parse_media_playlist(kPlaylistText, kPlaylistUrl);
  std::vector<std::string> out{*p.init_section_uri};
  for (const auto& s : p.segments) out.push_back(s.uri);
  return out;
}

inline std::string part_body(std::size_t index) {
  std::string body = mock::generate_blob(kPartLengths.at(index), 0x5eed0000 + index);
  if (index == 0 && body.size() >= 8) body.replace(4, 4, "ftyp");
  if (index > 0 && body.size() >= 8) body.replace(4, 4, "moof");
  return body;
}

inline std::string image_body() {
  std::string body = mock::generate_blob(kImageLength, 0x1a5e);
  body.replace(0, 4, "\xff\xd8\xff\xe0");
  body.replace(body.size() - 2, 2, "\xff\xd9");
  return body;
}

inline mock::ScenarioConfig scenario(std::string cdx_lines = {}) {
  mock::ScenarioConfig c;
  c.sessions.push_back({std::string(kActiveSession),
                        {"WhiteKitty2012", "BKitty2020"},
                        mock::SessionPhase::active,
                        {{"WhiteKitty2012", std::string(kOwnerToken)}, {"BKitty2020", std::string(kPeerToken)}}});
  c.sessions.push_back({std::string(kEarlierSession),
                        {"WhiteKitty2012", "BKitty2020"},
                        mock::SessionPhase::expired,
                        {{"WhiteKitty2012", std::string(kExpiredToken)}}});
  c.sessions.push_back({std::string(kOtherSession),
                        {"kitten2017_"},
                        mock::SessionPhase::active,
                        {{"kitten2017_", std::string(kThirdPartyToken)}}});
  c.image_routes.push_back({std::string(kImagePath), image_body(), std::string(kActiveSession), "image/jpeg"});
  c.playlist_routes.push_back({std::string(kPlaylistPath), std::string(kPlaylistText), true});
  auto urls = part_urls();
  for (std::size_t i = 0; i < urls.size(); ++i) {
    c.video_routes.push_back({parse_uri(urls[i]).path, part_body(i), true, "video/mp4"});
  }
  c.cdx_lines = std::move(cdx_lines);
  c.sts_header_value = std::string(kStsValue);
  c.csp_header_value = std::string(kCspValue);
  c.clock = std::string(kFirstCapture);
  return c;
}

}  // namespace dmaudit::reference
