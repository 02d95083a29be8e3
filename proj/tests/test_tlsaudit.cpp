#include <random>

#include "catch_amalgamated.hpp"

#include "dmaudit/tlsaudit.hpp"
#include "support.hpp"

using namespace dmaudit;

namespace {

const auto kSnapshot = parse_preload_snapshot(testing::read_file(testing::data_path("preload_snapshot.txt")));

// Every suffix of the host, nearest first, checked naively.
PreloadStatus preload_oracle(const std::string& host, const std::vector<PreloadEntry>& snap) {
  std::vector<std::string> labels;
  std::string cur;
  for (char c : host) {
    if (c == '.') {
      labels.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  labels.push_back(cur);
  for (std::size_t start = 0; start < labels.size(); ++start) {
    std::string suffix;
    for (std::size_t k = start; k < labels.size(); ++k) suffix += (k > start ? "." : "") + labels[k];
    for (const auto& e : snap) {
      if (e.domain != suffix) continue;
      if (start == 0) return {true, std::nullopt};
      if (e.include_subdomains) return {true, suffix};
    }
  }
  return {};
}

PlainHttpResult plain(bool served) {
  PlainHttpResult p;
  p.served = served;
  p.http_outcome = served ? ProbeOutcome::of_status(200, 10) : ProbeOutcome::of_status(301, 0);
  p.https_outcome = ProbeOutcome::of_status(200, 10);
  return p;
}

}  // namespace

TEST_CASE("STS header parsing") {
  auto p = parse_sts(reference::kStsValue);
  CHECK(p.max_age == 631138519);
  CHECK_FALSE(p.include_subdomains);
  CHECK_FALSE(p.preload);
  CHECK(p.active());

  auto q = parse_sts(" Max-Age=\"10\" ; includeSubDomains;PRELOAD; unknown=1");
  CHECK(q.max_age == 10);
  CHECK(q.include_subdomains);
  CHECK(q.preload);
  CHECK_FALSE(parse_sts("max-age=0").active());

  CHECK_THROWS_AS(parse_sts("includeSubDomains"), MalformedSts);
  CHECK_THROWS_AS(parse_sts("max-age=abc"), MalformedSts);
  CHECK_THROWS_AS(parse_sts("max-age=-5"), MalformedSts);
  CHECK_THROWS_AS(parse_sts(""), MalformedSts);
}

TEST_CASE("preload lookups walk parent domains") {
  CHECK(preload_status("twitter.com", kSnapshot).host_listed);
  auto api = preload_status("x.api.twitter.com", kSnapshot);
  CHECK(api.host_listed);
  CHECK(api.matched_parent == "api.twitter.com");
  CHECK_FALSE(preload_status("ton.twitter.com", kSnapshot).host_listed);
  CHECK_FALSE(preload_status("video.twimg.com", kSnapshot).host_listed);
  CHECK_FALSE(preload_status("twimg.com", kSnapshot).host_listed);
  CHECK(preload_status("API.Twitter.COM.", kSnapshot).host_listed);

  std::vector<std::string> hosts = {"twitter.com", "a.twitter.com", "mobile.twitter.com", "a.b.mobile.twitter.com",
                                    "video.twimg.com", "google.com", "x.google.com", "github.com", "www.github.com",
                                    "paypal.com", "a.paypal.com", "example.org", "com"};
  for (const auto& h : hosts) {
    INFO(h);
    auto got = preload_status(h, kSnapshot);
    auto want = preload_oracle(h, kSnapshot);
    CHECK(got.host_listed == want.host_listed);
    CHECK(got.matched_parent == want.matched_parent);
  }
}

TEST_CASE("connect-src matching") {
  auto csp = parse_csp_connect_src(reference::kCspValue);
  REQUIRE(csp);
  CHECK(csp_connect_src_allows(*csp, reference::part_urls()[0]));
  CHECK_FALSE(csp_connect_src_allows(*csp, "http://video.twimg.com/x"));
  CHECK_FALSE(csp_connect_src_allows(*csp, "https://twimg.com/x"));  // wildcard needs a label
  CHECK(csp_connect_src_allows(*csp, "https://api.twitter.com/1.1/x"));
  CHECK_FALSE(csp_connect_src_allows(*csp, "https://api.twitter.com:8443/x"));
  CHECK(csp_connect_src_allows(*csp, "https://twitter.com/home"));  // 'self'
  CHECK_FALSE(csp_connect_src_allows(*csp, "https://evil.example/"));

  auto pathy = parse_csp_source_list("https://cdn.example/a/ https://cdn.example/exact.js cdn2.example:* data:");
  CHECK(csp_connect_src_allows(pathy, "https://cdn.example/a/b/c"));
  CHECK_FALSE(csp_connect_src_allows(pathy, "https://cdn.example/b"));
  CHECK(csp_connect_src_allows(pathy, "https://cdn.example/exact.js"));
  CHECK_FALSE(csp_connect_src_allows(pathy, "https://cdn.example/exact.js/more"));
  CHECK(csp_connect_src_allows(pathy, "https://cdn2.example:9999/", "https://self.example"));
  CHECK_FALSE(csp_connect_src_allows(pathy, "http://cdn2.example/", "https://self.example"));

  CHECK_FALSE(parse_csp_connect_src("default-src 'self'"));
  auto star = parse_csp_connect_src("connect-src *");
  REQUIRE(star);
  CHECK(csp_connect_src_allows(*star, "http://anything.example/"));
}

TEST_CASE("scheme flip over random media hosts") {
  auto csp = *parse_csp_connect_src(reference::kCspValue);
  std::mt19937 rng(100);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
  for (int i = 0; i < 100; ++i) {
    std::string label;
    for (int k = 0, n = 1 + static_cast<int>(rng() % 12); k < n; ++k) label += alphabet[rng() % alphabet.size()];
    std::string path = "/dm_video/" + std::to_string(rng()) + "/vid/x.m4s";
    INFO(label);
    CHECK(csp_connect_src_allows(csp, "https://" + label + ".twimg.com" + path));
    CHECK_FALSE(csp_connect_src_allows(csp, "http://" + label + ".twimg.com" + path));
  }
}

TEST_CASE("enforcement truth table") {
  auto sts = parse_sts("max-age=100");
  PreloadStatus listed{true, std::nullopt};
  PreloadStatus unlisted{};
  struct Row {
    bool served;
    bool with_sts;
    bool preloaded;
    HttpsVerdict want;
  };
  const Row rows[] = {
      {false, false, false, HttpsVerdict::enforced},    {false, false, true, HttpsVerdict::enforced},
      {false, true, false, HttpsVerdict::enforced},     {false, true, true, HttpsVerdict::enforced},
      {true, false, false, HttpsVerdict::not_enforced}, {true, false, true, HttpsVerdict::enforced},
      {true, true, false, HttpsVerdict::header_only},   {true, true, true, HttpsVerdict::enforced},
  };
  for (const auto& r : rows) {
    INFO(r.served << r.with_sts << r.preloaded);
    auto rep = evaluate_https_enforcement(plain(r.served), r.with_sts ? std::optional(sts) : std::nullopt,
                                          r.preloaded ? listed : unlisted);
    CHECK(rep.verdict == r.want);
    CHECK_FALSE(rep.findings.empty());
  }
  auto zero = evaluate_https_enforcement(plain(true), parse_sts("max-age=0"), unlisted);
  CHECK(zero.verdict == HttpsVerdict::not_enforced);
}

TEST_CASE("media host on the mock is header-only") {
  testing::Mock m;
  ProbeLimits l;
  l.client = m.client;
  auto url = reference::part_urls()[0];
  auto p = check_plain_http(url, l);
  CHECK(p.served);
  auto v = http::find_header(p.https_outcome.response_headers, "strict-transport-security");
  REQUIRE(v);
  auto rep = evaluate_https_enforcement(p, parse_sts(*v), preload_status(reference::kVideoHost, kSnapshot));
  CHECK(rep.verdict == HttpsVerdict::header_only);

  auto config = reference::scenario();
  config.plain_listener = false;
  testing::Mock closed(config);
  l.client = closed.client;
  l.client.timeout = std::chrono::milliseconds(1000);
  auto q = check_plain_http(url, l);
  CHECK_FALSE(q.served);
  auto rep2 = evaluate_https_enforcement(q, parse_sts(reference::kStsValue), preload_status(reference::kVideoHost, kSnapshot));
  CHECK(rep2.verdict == HttpsVerdict::enforced);
}
