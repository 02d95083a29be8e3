#include <algorithm>
#include <random>
#include <thread>

#include "catch_amalgamated.hpp"

#include "dmaudit/probe.hpp"
#include "dmaudit/report.hpp"
#include "support.hpp"

using namespace dmaudit;
namespace names = dmaudit::profile_names;

namespace {

ProbeLimits limits_for(const testing::Mock& m) {
  ProbeLimits l;
  l.client = m.client;
  return l;
}

std::vector<std::string> labels(const OutcomeMatrix& m) {
  std::vector<std::string> out;
  for (const auto& e : m.entries) out.push_back(e.outcome.label());
  return out;
}

ProbeOutcome random_outcome(std::mt19937& rng) {
  static const int codes[] = {200, 204, 301, 401, 403, 404, 500};
  switch (rng() % 5) {
    case 0: return ProbeOutcome::of(OutcomeKind::empty_reply);
    case 1: return ProbeOutcome::of(OutcomeKind::timeout);
    default: return ProbeOutcome::of_status(codes[rng() % 7], rng() % 3 == 0 ? 0 : 100);
  }
}

}  // namespace

TEST_CASE("default matrix profiles satisfy their annotations") {
  auto profiles = build_default_matrix(reference::credentials());
  REQUIRE(profiles.size() == 5);
  for (const auto& p : profiles) CHECK_NOTHROW(validate_profile(p));
  CHECK(profiles[0].name == names::full_session);
  CHECK(http::has_header(profiles[0].headers, "Cookie"));
  CHECK_FALSE(http::has_header(profiles[1].headers, "Cookie"));
  CHECK_FALSE(http::has_header(profiles[2].headers, "Referer"));

  HeaderProfile bad{"X", {{"Cookie", "a=b"}}, CookieRole::none, false};
  CHECK_THROWS_AS(validate_profile(bad), std::invalid_argument);
  HeaderProfile bad_ref{"Y", {}, CookieRole::none, true};
  CHECK_THROWS_AS(validate_profile(bad_ref), std::invalid_argument);
}

TEST_CASE("profiles load from JSON") {
  json doc = {{"profiles",
               {{{"name", "A"}, {"headers", {{"Cookie", "x=1"}, {"Referer", "https://r/"}}}, {"cookie_role", "SESSION_PARTY"},
                 {"has_referer", true}},
                {{"name", "B"}, {"headers", json::object()}, {"cookie_role", "NONE"}, {"has_referer", false}}}}};
  auto profiles = profiles_from_json(doc);
  REQUIRE(profiles.size() == 2);
  CHECK(profiles[0].cookie_role == CookieRole::session_party);
  CHECK(profiles[0].headers.size() == 2);
  json back = profiles;
  CHECK(profiles_from_json(back) == profiles);
  doc["profiles"][1]["has_referer"] = true;
  CHECK_THROWS(profiles_from_json(doc));
}

TEST_CASE("image route: five-profile matrix and classification") {
  testing::Mock m;
  auto matrix = run_matrix(reference::kImageUrl, build_default_matrix(reference::credentials()), limits_for(m));
  CHECK(labels(matrix) == std::vector<std::string>{"200", "401", "404", "404", "EMPTY_REPLY"});
  CHECK(matrix.find(names::full_session)->body_length == reference::kImageLength);
  CHECK(matrix.find(names::no_cookie)->body_length == 0);
  CHECK(matrix.find(names::no_cookie)->declared_length == 0);

  auto p = classify(matrix);
  CHECK(p.unauthenticated_access.value == Verdict::no);
  CHECK(p.cookie_required.value == Verdict::yes);
  CHECK(p.referer_required.value == Verdict::yes);
  CHECK(p.party_bound.value == Verdict::yes);
  CHECK(p.session_liveness_bound.value == Verdict::yes);
  CHECK(p.session_liveness_bound.evidence == std::vector<Evidence>{{names::expired, "EMPTY_REPLY"}});
}

TEST_CASE("video route: every profile gets the bytes") {
  testing::Mock m;
  auto url = reference::part_urls()[1];
  auto matrix = run_matrix(url, build_default_matrix(reference::credentials()), limits_for(m));
  for (const auto& e : matrix.entries) {
    CHECK(e.outcome.label() == "200");
    CHECK(e.outcome.body_length == reference::kPartLengths[1]);
  }
  auto p = classify(matrix);
  CHECK(p.unauthenticated_access.value == Verdict::yes);
  CHECK(p.cookie_required.value == Verdict::no);
  CHECK(p.referer_required.value == Verdict::no);
  CHECK(p.party_bound.value == Verdict::no);
  CHECK(p.session_liveness_bound.value == Verdict::no);
}

TEST_CASE("requests carry exactly the profile headers") {
  testing::Mock m;
  auto profiles = build_default_matrix(reference::credentials());
  auto matrix = run_matrix(reference::kImageUrl, profiles, limits_for(m));
  auto trace = m.server.trace();
  REQUIRE(trace.size() == profiles.size());
  for (const auto& t : trace) {
    auto it = std::find_if(profiles.begin(), profiles.end(), [&](const HeaderProfile& p) {
      return http::find_header(p.headers, "Cookie") == http::find_header(t.headers, "Cookie") &&
             http::has_header(p.headers, "Referer") == http::has_header(t.headers, "Referer");
    });
    REQUIRE(it != profiles.end());
    http::HeaderList expected = {{"Host", "ton.twitter.com"}};
    expected.insert(expected.end(), it->headers.begin(), it->headers.end());
    CHECK(t.headers == expected);
    CHECK(t.method == "GET");
    CHECK(t.target == std::string(reference::kImagePath));
  }
  CHECK(matrix.execution_order.size() == 5);
}

TEST_CASE("empty reply, refusal and timeout are distinct") {
  http::Server silent("slow", "127.0.0.1", 0, [](const http::Request&) {
    std::this_thread::sleep_for(std::chrono::milliseconds(700));
    return http::ServerResponse::text(200, "late");
  });
  http::Server closer("closer", "127.0.0.1", 0, [](const http::Request&) {
    http::ServerResponse r;
    r.close_without_reply = true;
    return r;
  });
  ProbeLimits l;
  l.client.timeout = std::chrono::milliseconds(200);
  HeaderProfile bare{"BARE", {}, CookieRole::none, false};

  auto timeout = probe_once("http://127.0.0.1:" + std::to_string(silent.port()) + "/", bare, l);
  CHECK(timeout.kind == OutcomeKind::timeout);
  auto empty = probe_once("http://127.0.0.1:" + std::to_string(closer.port()) + "/", bare, l);
  CHECK(empty.kind == OutcomeKind::empty_reply);
  auto refused = probe_once("http://127.0.0.1:9/", bare, l);
  CHECK(refused.kind == OutcomeKind::transport_error);
}

TEST_CASE("probes never follow redirects") {
  testing::Mock m;
  HeaderProfile bare{"BARE", {}, CookieRole::none, false};
  auto o = probe_once("http://ton.twitter.com" + std::string(reference::kImagePath), bare, limits_for(m));
  CHECK(o.status == 301);
  CHECK(http::find_header(o.response_headers, "location")->rfind("https://ton.twitter.com/", 0) == 0);
}

TEST_CASE("matrix input validation") {
  testing::Mock m;
  auto profiles = build_default_matrix(reference::credentials());
  profiles.push_back(profiles[0]);
  CHECK_THROWS_AS(run_matrix(reference::kImageUrl, profiles, limits_for(m)), std::invalid_argument);
  CHECK_THROWS_AS(run_matrix(reference::kImageUrl, {}, limits_for(m)), std::invalid_argument);
  CHECK_THROWS(run_matrix("ftp://x/y", build_default_matrix(), limits_for(m)));
}

TEST_CASE("classification needs the unauthenticated witness") {
  OutcomeMatrix m;
  m.set(names::full_session, ProbeOutcome::of_status(200, 10));
  CHECK_THROWS_AS(classify(m), InsufficientEvidence);
  m.set(names::no_cookie, ProbeOutcome::of_status(401, 0));
  auto p = classify(m);
  CHECK(p.referer_required.value == Verdict::indeterminate);
  CHECK(p.party_bound.value == Verdict::indeterminate);
  CHECK(p.session_liveness_bound.value == Verdict::indeterminate);
  CHECK(p.cookie_required.value == Verdict::yes);
}

TEST_CASE("non-status witnesses leave fields undecided") {
  OutcomeMatrix m;
  m.set(names::full_session, ProbeOutcome::of_status(200, 10));
  m.set(names::no_cookie, ProbeOutcome::of_status(401, 0));
  m.set(names::no_referer, ProbeOutcome::of(OutcomeKind::timeout));
  m.set(names::third_party, ProbeOutcome::of(OutcomeKind::empty_reply));
  m.set(names::expired, ProbeOutcome::of(OutcomeKind::timeout));
  auto p = classify(m);
  CHECK(p.referer_required.value == Verdict::indeterminate);
  CHECK(p.party_bound.value == Verdict::indeterminate);
  CHECK(p.session_liveness_bound.value == Verdict::indeterminate);
}

TEST_CASE("classifier is deterministic and independent of entry order") {
  std::mt19937 rng(2022);
  const std::vector<std::string> all = {names::full_session, names::no_cookie, names::no_referer, names::third_party,
                                        names::expired};
  for (int i = 0; i < 2000; ++i) {
    OutcomeMatrix m;
    for (const auto& n : all) {
      if (n == names::no_cookie || rng() % 5 != 0) m.set(n, random_outcome(rng));
    }
    auto first = classify(m);
    CHECK(classify(m) == first);

    OutcomeMatrix shuffled = m;
    std::shuffle(shuffled.entries.begin(), shuffled.entries.end(), rng);
    CHECK(classify(shuffled) == first);

    // Access without credentials rules out a cookie requirement.
    if (first.unauthenticated_access.value == Verdict::yes) CHECK(first.cookie_required.value == Verdict::no);
  }
}

TEST_CASE("plain http twin check") {
  testing::Mock m;
  auto served = check_plain_http(reference::part_urls()[0], limits_for(m));
  CHECK(served.served);
  CHECK(served.lengths_match);
  CHECK(served.https_outcome.status == 200);

  auto image = check_plain_http(reference::kImageUrl, limits_for(m));
  CHECK_FALSE(image.served);
  CHECK(image.http_outcome.status == 301);
  CHECK_THROWS(check_plain_http("http://video.twimg.com/x", limits_for(m)));
}
