#include <thread>

#include "doctest.h"
#include "stylegate/error.hpp"
#include "stylegate/mock_backends.hpp"
#include "stylegate/moderation.hpp"
#include "support.hpp"

using namespace stylegate;
using namespace std::chrono_literals;

namespace {

PathInputs inputs(double score, const std::string& caption) {
  PathInputs in;
  in.score = NudityScore{score, "test"};
  in.caption = Caption{caption, {}};
  return in;
}

const KeywordDictionary& dict() {
  static const KeywordDictionary d = builtin_test_dictionary();
  return d;
}

}  // namespace

TEST_CASE("reference examples") {
  ModerationConfig cfg;
  auto v = decide(inputs(0.7, "a cat"), cfg, dict());
  CHECK(v.label == Label::nudity);
  CHECK(v.score_path_flag);
  CHECK_FALSE(v.keyword_path_flag);

  v = decide(inputs(0.2, "a nude figure"), cfg, dict());
  CHECK(v.label == Label::nudity);
  CHECK_FALSE(v.score_path_flag);
  CHECK(v.keyword_path_flag);
  REQUIRE(v.keywords);
  CHECK(v.keywords->hits.at(0).entry == "nude");

  v = decide(inputs(0.2, "a cat on a sofa"), cfg, dict());
  CHECK(v.label == Label::neutral);
  CHECK_FALSE(v.indeterminate);
}

TEST_CASE("threshold is inclusive and monotone") {
  ModerationConfig cfg;
  CHECK(decide(inputs(0.6, "a cat"), cfg, dict()).score_path_flag);
  CHECK_FALSE(decide(inputs(std::nextafter(0.6, 0.0), "a cat"), cfg, dict()).score_path_flag);
  testsupport::Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double a = u(rng), b = u(rng);
    const double lo = std::min(a, b), hi = std::max(a, b);
    const std::string cap = i % 2 ? "a cat" : "naked";
    if (decide(inputs(lo, cap), cfg, dict()).label == Label::nudity) {
      CHECK(decide(inputs(hi, cap), cfg, dict()).label == Label::nudity);
    }
  }
}

TEST_CASE("label iff a path fired on determinate verdicts") {
  ModerationConfig cfg;
  testsupport::Rng rng(11);
  const auto words = testsupport::word_pool();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const auto v = decide(inputs(u(rng), testsupport::random_caption(rng, words, 1, 6)), cfg, dict());
    CHECK((v.label == Label::nudity) == (v.score_path_flag || v.keyword_path_flag));
  }
}

TEST_CASE("fail-closed and fail-open policies") {
  ModerationConfig cfg;
  PathInputs in;
  in.score = NudityScore{0.1, "x"};
  in.caption_error = "caption backend: unavailable";
  auto v = decide(in, cfg, dict());
  CHECK(v.label == Label::nudity);
  CHECK(v.indeterminate);
  CHECK(v.reason == "caption_backend_unavailable");

  cfg.require_caption = false;
  v = decide(in, cfg, dict());
  CHECK(v.label == Label::neutral);
  CHECK_FALSE(v.indeterminate);

  PathInputs none;
  none.score_error = "down";
  none.caption_error = "down";
  v = decide(none, cfg, dict());
  CHECK(v.label == Label::nudity);
  CHECK(v.indeterminate);
  CHECK(v.reason == "backends_unavailable");

  PathInputs bad = inputs(1.5, "a cat");
  v = decide(bad, ModerationConfig{}, dict());
  CHECK(v.indeterminate);
  CHECK(v.reason == "malformed_backend_response");
}

TEST_CASE("single-path methods ignore the other path") {
  ModerationConfig cfg;
  cfg.paths = ModerationPaths::score_only;
  auto v = decide(inputs(0.1, "naked"), cfg, dict());
  CHECK(v.label == Label::neutral);
  cfg.paths = ModerationPaths::keyword_only;
  v = decide(inputs(0.99, "a cat"), cfg, dict());
  CHECK(v.label == Label::neutral);
}

TEST_CASE("config validation") {
  ModerationConfig cfg;
  cfg.score_threshold = 1.2;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.score_threshold = 0.5;
  cfg.deadline = 0ms;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("moderate runs both paths against mocks") {
  const auto img = testsupport::portrait_fixture(32, 32, {200, 150, 120}, 230);
  MockProfileOptions opts;
  auto set = make_mock_backends(opts);
  auto v = moderate(img, ModerationConfig{}, set.score, set.caption, dict());
  CHECK(v.label == Label::nudity);
  REQUIRE(v.score);
  CHECK(v.score->value == doctest::Approx(230.0 / 255.0));

  opts.caption_overrides[image_digest(img)] = "A NUDE statue";
  opts.score_probe = false;
  set = make_mock_backends(opts);
  v = moderate(img, ModerationConfig{}, set.score, set.caption, dict());
  CHECK(v.keyword_path_flag);
  CHECK_FALSE(v.score_path_flag);
}

TEST_CASE("a path that misses the deadline is treated as failed") {
  auto set = make_mock_backends({});
  FaultSpec slow;
  slow.delay = 500ms;
  const auto faulty = inject_faults(set, BackendRole::caption, slow);
  ModerationConfig cfg;
  cfg.deadline = 50ms;
  const auto img = testsupport::portrait_fixture(16, 16, {200, 150, 120}, 10);
  const auto start = std::chrono::steady_clock::now();
  const auto v = moderate(img, cfg, faulty.score, faulty.caption, dict());
  CHECK(std::chrono::steady_clock::now() - start < 400ms);
  CHECK(v.indeterminate);
  CHECK(v.label == Label::nudity);
  REQUIRE_FALSE(v.errors.empty());
  CHECK(v.errors[0].find("timeout") != std::string::npos);
}

TEST_CASE("batch keeps order and isolates failures") {
  auto set = make_mock_backends({});
  CHECK(moderate_batch({}, ModerationConfig{}, set.score, set.caption, dict()).empty());

  std::vector<PortraitImage> imgs = {testsupport::portrait_fixture(16, 16, {200, 150, 120}, 20),
                                     testsupport::portrait_fixture(16, 16, {200, 150, 120}, 250),
                                     testsupport::portrait_fixture(16, 16, {200, 150, 120}, 40, 2)};
  auto out = moderate_batch(imgs, ModerationConfig{}, set.score, set.caption, dict(), 2);
  REQUIRE(out.size() == 3);
  CHECK(out[0].label == Label::neutral);
  CHECK(out[1].label == Label::nudity);
  CHECK(out[2].label == Label::neutral);

  FaultSpec second;
  second.fail_calls = {1};
  const auto faulty = inject_faults(set, BackendRole::score, second);
  out = moderate_batch(imgs, ModerationConfig{}, faulty.score, faulty.caption, dict(), 1);
  CHECK_FALSE(out[0].indeterminate);
  CHECK(out[1].indeterminate);
  CHECK_FALSE(out[2].indeterminate);
}

TEST_CASE("verdict json carries the cli fields") {
  const auto v = decide(inputs(0.2, "a nude figure"), ModerationConfig{}, dict());
  const auto j = to_json(v);
  CHECK(j["label"] == "nudity");
  CHECK(j["score"] == 0.2);
  CHECK(j["score_flag"] == false);
  CHECK(j["keyword_flag"] == true);
  CHECK(j["hits"].size() == 1);
  CHECK_FALSE(j.contains("latency_ms"));
}
