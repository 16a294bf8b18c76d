#include "doctest.h"
#include "gateway_client.hpp"
#include "stylegate/error.hpp"
#include "stylegate/gateway.hpp"
#include "stylegate/http_backend.hpp"
#include "support.hpp"

using namespace stylegate;
using testsupport::Reply;
using nlohmann::json;

namespace {

ServiceConfig test_config(const std::string& tag) {
  ServiceConfig cfg;
  cfg.listen = "127.0.0.1:0";
  cfg.storage_path = testsupport::fresh_temp_dir(tag);
  cfg.job_workers = 2;
  return cfg;
}

struct Running {
  explicit Running(ServiceConfig cfg, GatewayOptions opts = {}) : gw(std::move(cfg), std::move(opts)) {
    port = gw.start();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(30, 0);
  }
  Gateway gw;
  int port = 0;
  std::unique_ptr<httplib::Client> client;
};

PortraitImage clean() { return testsupport::portrait_fixture(48, 48, {205, 160, 130}, 40); }
PortraitImage explicit_img() { return testsupport::portrait_fixture(48, 48, {205, 160, 130}, 240); }

}  // namespace

TEST_CASE("health") {
  Running r(test_config("gw-health"));
  const auto res = testsupport::to_reply(r.client->Get("/v1/healthz"));
  CHECK(res.status == 200);
  CHECK(res.json() == json{{"status", "ok"}});
}

TEST_CASE("moderate endpoint") {
  auto cfg = test_config("gw-mod");
  cfg.mock.score_probe = false;
  cfg.mock.default_score = 0.9;
  Running r(cfg);
  auto res = testsupport::post_image(*r.client, "/v1/moderate", clean());
  CHECK(res.status == 200);
  CHECK(res.json()["label"] == "nudity");
  CHECK(res.json()["score_flag"] == true);
  const std::string id = res.json()["job_id"];
  const auto job = testsupport::to_reply(r.client->Get("/v1/jobs/" + id)).json();
  CHECK(job["kind"] == "moderate");
  CHECK(job["state"] == "done");
  CHECK(job["config_fingerprint"] == r.gw.fingerprint());

  res = testsupport::post_image(*r.client, "/v1/moderate", clean(), {{"threshold", "0.95", "", ""}});
  CHECK(res.json()["label"] == "neutral");

  // raw body
  res = testsupport::to_reply(r.client->Post("/v1/moderate", testsupport::png_string(encode_png(clean())), "image/png"));
  CHECK(res.status == 200);
}

TEST_CASE("input errors") {
  auto cfg = test_config("gw-err");
  cfg.max_image_bytes = 4096;
  Running r(cfg);
  CHECK(testsupport::post_multipart(*r.client, "/v1/moderate", {{"threshold", "0.5", "", ""}}).status == 400);
  CHECK(testsupport::post_multipart(*r.client, "/v1/moderate", {{"image", "GIF89a....", "x.gif", "image/gif"}})
            .status == 422);
  auto big = testsupport::portrait_fixture(128, 128, {200, 150, 120});
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x)
      big.set(x, y, {static_cast<std::uint8_t>(x * 7 + y * 13), static_cast<std::uint8_t>(x * y),
                     static_cast<std::uint8_t>(x ^ y)});
  CHECK(testsupport::post_image(*r.client, "/v1/moderate", big).status == 413);
  CHECK(testsupport::post_image(*r.client, "/v1/moderate", clean(), {{"threshold", "abc", "", ""}}).status == 400);
  CHECK(testsupport::post_image(*r.client, "/v1/moderate", clean(), {{"threshold", "2", "", ""}}).status == 400);
  CHECK(testsupport::post_image(*r.client, "/v1/moderate?profile=nope", clean()).status == 400);
  CHECK(testsupport::to_reply(r.client->Get("/v1/jobs/00000000-0000-0000-0000-000000000000")).status == 404);
}

TEST_CASE("stylize endpoint runs the guarded pipeline") {
  Running r(test_config("gw-sty"));
  auto res = testsupport::post_image(*r.client, "/v1/stylize", clean(), {{"seed", "11", "", ""}});
  REQUIRE(res.status == 200);
  auto job = res.json();
  CHECK(job["state"] == "done");
  const std::string id = job["job_id"];
  CHECK(job["result"]["ledger"]["stages"][0]["denoising_strength"] == 0.4);
  CHECK(job["result"]["ledger"]["stages"][1]["denoising_strength"] == 0.5);
  CHECK(job["result"]["ledger"]["stages"][0]["seed"] == 11);

  // moderation evidence precedes every diffusion call
  std::optional<std::size_t> moderation_at, first_i2i;
  for (const auto& e : job["history"]) {
    if (e["event"] == "moderation" && !moderation_at) moderation_at = e["seq"].get<std::size_t>();
    if (e["event"] == "backend_call" && e["detail"]["op"] == "i2i" && !first_i2i) first_i2i = e["seq"].get<std::size_t>();
  }
  REQUIRE(moderation_at);
  REQUIRE(first_i2i);
  CHECK(*moderation_at < *first_i2i);

  const auto out = testsupport::to_reply(r.client->Get(job["result"]["links"]["artifacts"]["output.png"].get<std::string>()));
  CHECK(out.status == 200);
  CHECK(out.content_type == "image/png");
  const auto inter = testsupport::to_reply(r.client->Get("/v1/jobs/" + id + "/artifacts/intermediate.png"));
  CHECK(image_digest(decode_png_rgb(std::span<const std::uint8_t>(
            reinterpret_cast<const std::uint8_t*>(inter.body.data()), inter.body.size()))) ==
        job["result"]["ledger"]["stages"][0]["output_digest"]);
  CHECK(testsupport::to_reply(r.client->Get("/v1/jobs/" + id + "/artifacts/nothing.png")).status == 404);

  res = testsupport::post_image(*r.client, "/v1/stylize", clean(), {{"baseline", "true", "", ""}});
  CHECK(res.json()["result"]["ledger"]["stages"][0]["denoising_strength"] == 0.9);
  CHECK(res.json()["result"]["ledger"]["mode"] == "baseline");
}

TEST_CASE("explicit input is rejected with zero diffusion calls") {
  Running r(test_config("gw-rej"));
  const auto before = r.gw.mock_calls()->count(BackendRole::diffusion);
  const auto res = testsupport::post_image(*r.client, "/v1/stylize", explicit_img());
  CHECK(res.status == 200);
  CHECK(res.json()["state"] == "rejected");
  CHECK(res.json()["result"]["rejection"] == "nudity");
  CHECK(r.gw.mock_calls()->count(BackendRole::diffusion) == before);
  CHECK(r.gw.mock_calls()->count(BackendRole::condition) == 0);
}

TEST_CASE("async stylize and polling") {
  Running r(test_config("gw-async"));
  const auto res = testsupport::post_image(*r.client, "/v1/stylize", clean(), {{"wait", "false", "", ""}});
  CHECK(res.status == 202);
  const std::string id = res.json()["job_id"];
  r.gw.wait_idle();
  const auto job = testsupport::to_reply(r.client->Get("/v1/jobs/" + id)).json();
  CHECK(job["state"] == "done");
}

TEST_CASE("backend outage fails closed without crashing") {
  FaultSpec down;
  down.fail_all = true;
  GatewayOptions opts;
  opts.mock_backends = inject_faults(make_mock_backends({}), BackendRole::caption, down);
  Running r(test_config("gw-down"), opts);
  auto res = testsupport::post_image(*r.client, "/v1/moderate", clean());
  CHECK(res.status == 503);
  CHECK(res.json()["indeterminate"] == true);
  res = testsupport::post_image(*r.client, "/v1/stylize", clean());
  CHECK(res.status == 503);
  CHECK(res.json()["state"] == "rejected");
  CHECK(res.json()["result"]["rejection"] == "backend_unavailable");
  CHECK(testsupport::to_reply(r.client->Get("/v1/healthz")).status == 200);

  GatewayOptions diffusion_down;
  diffusion_down.mock_backends = inject_faults(make_mock_backends({}), BackendRole::diffusion, down);
  Running r2(test_config("gw-down2"), diffusion_down);
  res = testsupport::post_image(*r2.client, "/v1/stylize", clean());
  CHECK(res.status == 503);
  CHECK(res.json()["state"] == "failed");
}

TEST_CASE("analyze skin tone with and without a mask") {
  Running r(test_config("gw-ana"));
  const auto img = clean();
  auto res = testsupport::post_image(
      *r.client, "/v1/analyze-skin-tone", img,
      {{"mask", testsupport::png_string(encode_png(testsupport::ellipse_mask(48, 48).to_plane())), "m.png",
        "image/png"}});
  REQUIRE(res.status == 200);
  CHECK(res.json()["mask_source"] == "upload");
  CHECK(res.json()["coverage"].get<double>() > 0.0);
  res = testsupport::post_image(*r.client, "/v1/analyze-skin-tone", img);
  CHECK(res.status == 200);
  CHECK(res.json()["mask_source"] == "segmentation");
  res = testsupport::post_image(*r.client, "/v1/analyze-skin-tone", img,
                                {{"mask", testsupport::png_string(encode_png(SkinMask(48, 48).to_plane())),
                                  "m.png", "image/png"}});
  CHECK(res.status == 422);
  res = testsupport::post_image(*r.client, "/v1/analyze-skin-tone", img,
                                {{"mask", testsupport::png_string(encode_png(SkinMask(8, 8).to_plane())), "m.png",
                                  "image/png"}});
  CHECK(res.status == 422);
}

TEST_CASE("live profile over the wire matches the mock profile") {
  BackendProtocolServer backends(make_mock_backends({}));
  const int bport = backends.start();
  auto cfg = test_config("gw-live");
  for (auto role : {BackendRole::score, BackendRole::caption, BackendRole::condition, BackendRole::diffusion,
                    BackendRole::segmentation}) {
    cfg.live_backends.push_back({role, "http://127.0.0.1:" + std::to_string(bport), std::chrono::milliseconds(5000),
                                 std::nullopt});
  }
  Running r(cfg);
  const auto mock = testsupport::post_image(*r.client, "/v1/stylize", clean());
  const auto live =
      testsupport::post_image(*r.client, "/v1/stylize", clean(), {}, {{"X-Stylegate-Profile", "live"}});
  REQUIRE(live.status == 200);
  CHECK(live.json()["result"]["ledger"]["stages"] == mock.json()["result"]["ledger"]["stages"]);
  backends.stop();
}

TEST_CASE("bearer token on the gateway") {
  ::setenv("STYLEGATE_GW_TOKEN", "t0k", 1);
  auto cfg = test_config("gw-auth");
  cfg.auth_token_env = "STYLEGATE_GW_TOKEN";
  Running r(cfg);
  CHECK(testsupport::post_image(*r.client, "/v1/moderate", clean()).status == 401);
  CHECK(testsupport::post_image(*r.client, "/v1/moderate", clean(), {}, {{"Authorization", "Bearer t0k"}}).status ==
        200);
  CHECK(testsupport::to_reply(r.client->Get("/v1/healthz")).status == 200);
}

TEST_CASE("invalid config aborts before binding") {
  auto cfg = test_config("gw-bad");
  cfg.moderation.score_threshold = 2.0;
  CHECK_THROWS_AS(Gateway{cfg}, Error);
  auto cfg2 = test_config("gw-bad2");
  cfg2.dictionary_path = "/nonexistent/dict.txt";
  CHECK_THROWS_AS(Gateway{cfg2}, Error);
}
