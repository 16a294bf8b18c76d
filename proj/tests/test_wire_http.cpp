#include <atomic>
#include <fstream>
#include <thread>

#include "doctest.h"
#include <Eigen/Core>
#include "httplib.h"
#include "stylegate/error.hpp"
#include "stylegate/http_backend.hpp"
#include "stylegate/mock_backends.hpp"
#include "stylegate/util.hpp"
#include "stylegate/wire.hpp"
#include "support.hpp"

using namespace stylegate;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

json vectors() {
  std::ifstream in(std::string(STYLEGATE_TEST_DIR) + "/vectors/wire/vectors.json");
  return json::parse(in);
}

template <typename Fn>
BackendFailure failure_of(Fn&& fn) {
  try {
    fn();
  } catch (const BackendError& e) {
    return e.cause();
  }
  FAIL("expected a BackendError");
  return BackendFailure::unavailable;
}

/// A server that answers every role with a fixed status and body.
struct CannedServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  CannedServer(int status, std::string body, std::chrono::milliseconds delay = 0ms) {
    server.Post(R"(/.*)", [=](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(delay);
      res.status = status;
      res.set_content(body, "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~CannedServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

std::vector<BackendDescriptor> all_roles(const std::string& url, std::chrono::milliseconds timeout = 5000ms) {
  std::vector<BackendDescriptor> out;
  for (auto r : {BackendRole::score, BackendRole::caption, BackendRole::condition, BackendRole::diffusion,
                 BackendRole::segmentation}) {
    out.push_back({r, url, timeout, std::nullopt});
  }
  return out;
}

}  // namespace

TEST_CASE("shared wire vectors parse on both sides") {
  const auto v = vectors();
  CHECK(wire::parse_score_response(v["score"]["response"]).value == 0.42);
  CHECK(wire::parse_caption_response(v["caption"]["response"]).text == "a small test image");
  const auto cond = wire::parse_condition_response(v["condition"]["response"], ConditionKind::edge);
  CHECK(cond.pixels(0, 1) == 255);
  CHECK(wire::parse_segmentation_response(v["segmentation"]["response"]).count() == 2);
  const auto img = wire::parse_diffusion_response(v["diffusion"]["response"]);
  CHECK(img.at(1, 1).r == 200);
  CHECK(img.at(0, 0).r == 255);

  const auto req = wire::parse_diffusion_request(v["diffusion"]["request"]);
  CHECK(req.condition->kind == ConditionKind::depth);
  CHECK(req.prompt.segments[0].weight == 1.2);
  CHECK(req.seed == 7);
  CHECK(wire::parse_condition_kind(v["condition"]["request"]) == ConditionKind::edge);
  CHECK(wire::parse_image_request(v["score"]["request"]).width() == 2);

  const std::string roles[] = {"score", "caption", "condition", "diffusion", "segmentation"};
  for (const auto& role : roles) {
    for (const auto& bad : v[role]["bad_responses"]) {
      CAPTURE(role);
      CAPTURE(bad.dump());
      CHECK(failure_of([&] {
              if (role == "score") wire::parse_score_response(bad);
              if (role == "caption") wire::parse_caption_response(bad);
              if (role == "condition") wire::parse_condition_response(bad, ConditionKind::edge);
              if (role == "diffusion") wire::parse_diffusion_response(bad);
              if (role == "segmentation") wire::parse_segmentation_response(bad);
            }) == BackendFailure::malformed_response);
    }
  }
  for (const auto& bad : v["condition"]["bad_requests"]) CHECK_THROWS_AS(wire::parse_condition_kind(bad), Error);
  for (const auto& bad : v["diffusion"]["bad_requests"]) CHECK_THROWS_AS(wire::parse_diffusion_request(bad), Error);
}

TEST_CASE("alpha images are flattened onto black") {
  const auto v = vectors();
  const auto img = decode_png_rgb(base64_decode(v["rgba_image"].get<std::string>()));
  CHECK(img.at(0, 0).r == 255);
}

TEST_CASE("client request builders emit the schema") {
  const auto img = testsupport::portrait_fixture(4, 4, {200, 150, 120});
  const auto d = wire::diffusion_request(DiffusionRequest{img, std::nullopt, parse_prompt("(a:1.5) b"), 0.4, 9});
  CHECK(d["condition_kind"] == "none");
  CHECK(d["condition_image"].is_null());
  CHECK(d["prompt"] == "(a:1.5) b");
  CHECK(d["denoising_strength"] == 0.4);
  CHECK(d["seed"] == 9);
  CHECK(wire::condition_request(img, ConditionKind::depth)["kind"] == "depth");
  CHECK(decode_png_rgb(base64_decode(wire::score_request(img)["image"].get<std::string>())) == img);
  const auto back = wire::parse_diffusion_request(d);
  CHECK(back.image == img);
  CHECK_FALSE(back.condition);
}

TEST_CASE("png payloads survive the wire bit-exactly") {
  testsupport::Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    PortraitImage img(1 + static_cast<int>(rng() % 40), 1 + static_cast<int>(rng() % 40));
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        img.set(x, y, {static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()),
                       static_cast<std::uint8_t>(rng())});
    CHECK(wire::parse_diffusion_response(wire::diffusion_response(img)) == img);
  }
}

TEST_CASE("http backends reproduce the in-process mocks") {
  const auto mocks = make_mock_backends({});
  BackendProtocolServer server(mocks);
  const int port = server.start();
  const auto remote = make_http_backends(all_roles("http://127.0.0.1:" + std::to_string(port)));
  const auto img = testsupport::portrait_fixture(24, 24, {200, 150, 120}, 180);

  CHECK(remote.score->score(img).value == mocks.score->score(img).value);
  CHECK(remote.caption->caption(img).text == mocks.caption->caption(img).text);
  const auto edge = remote.condition->extract(img, ConditionKind::edge);
  CHECK(edge.pixels.isApprox(mocks.condition->extract(img, ConditionKind::edge).pixels));
  const DiffusionRequest req{img, edge, parse_prompt("portrait"), 0.4, 3};
  CHECK(remote.diffusion->img2img(req) == mocks.diffusion->img2img(req));
  CHECK(remote.segmentation->segment(img).bits().isApprox(mocks.segmentation->segment(img).bits()));
  server.stop();
}

TEST_CASE("bearer token is enforced by the protocol server") {
  ::setenv("STYLEGATE_TEST_TOKEN", "s3cret", 1);
  BackendProtocolServer server(make_mock_backends({}), std::string("s3cret"));
  const int port = server.start();
  const std::string url = "http://127.0.0.1:" + std::to_string(port);
  const auto img = testsupport::portrait_fixture(8, 8, {200, 150, 120});
  auto d = all_roles(url);
  const auto anon = make_http_backends(d);
  CHECK(failure_of([&] { anon.score->score(img); }) == BackendFailure::http_status);
  for (auto& x : d) x.auth_token_env = "STYLEGATE_TEST_TOKEN";
  CHECK_NOTHROW(make_http_backends(d).score->score(img));
  server.stop();
}

TEST_CASE("transport failures map to typed causes") {
  const auto img = testsupport::portrait_fixture(8, 8, {200, 150, 120});
  {
    CannedServer s(500, "{}");
    CHECK(failure_of([&] { make_http_backends(all_roles(s.url())).score->score(img); }) ==
          BackendFailure::http_status);
  }
  {
    CannedServer s(200, "this is not json");
    CHECK(failure_of([&] { make_http_backends(all_roles(s.url())).caption->caption(img); }) ==
          BackendFailure::malformed_response);
  }
  {
    CannedServer s(200, "{\"score\": 3.0}");
    CHECK(failure_of([&] { make_http_backends(all_roles(s.url())).score->score(img); }) ==
          BackendFailure::malformed_response);
  }
  {
    CannedServer s(200, "{\"score\": 0.5}", 600ms);
    CHECK(failure_of([&] { make_http_backends(all_roles(s.url(), 150ms)).score->score(img); }) ==
          BackendFailure::timeout);
  }
  int dead_port = 0;
  {
    CannedServer s(200, "{}");
    dead_port = s.port;
  }
  CHECK(failure_of([&] {
          make_http_backends(all_roles("http://127.0.0.1:" + std::to_string(dead_port))).score->score(img);
        }) == BackendFailure::unavailable);
  CHECK(make_http_backends({}).score == nullptr);
}

namespace {
class CountingScore : public ScoreBackend {
 public:
  NudityScore score(const PortraitImage&) override {
    const int now = ++active;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(20ms);
    --active;
    return {0.1, "count"};
  }
  std::atomic<int> active{0};
  std::atomic<int> peak{0};
};
}  // namespace

TEST_CASE("per-role concurrency limit") {
  auto counting = std::make_shared<CountingScore>();
  BackendSet set;
  set.score = counting;
  const auto limited = limit_concurrency(set, 2);
  const auto img = testsupport::portrait_fixture(4, 4, {200, 150, 120});
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { limited.score->score(img); });
  for (auto& t : threads) t.join();
  CHECK(counting->peak.load() <= 2);
  CHECK(counting->peak.load() >= 1);
}
