#include "stylegate/gateway.hpp"

#include <charconv>
#include <cstdlib>
#include <future>

#include "httplib.h"
#include "stylegate/error.hpp"
#include "stylegate/http_backend.hpp"
#include "stylegate/skintone.hpp"
#include "stylegate/stylize.hpp"

namespace stylegate {

using nlohmann::json;

namespace {

struct HttpError : std::runtime_error {
  HttpError(int s, std::string c, const std::string& d) : std::runtime_error(d), status(s), code(std::move(c)) {}
  int status;
  std::string code;
};

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& detail) {
  send_json(res, status, {{"error", code}, {"detail", detail}});
}

int status_for(Errc code) {
  switch (code) {
    case Errc::unsupported_format:
    case Errc::insufficient_skin_pixels:
    case Errc::no_usable_entries:
    case Errc::dimension_mismatch:
      return 422;
    case Errc::io_error:
      return 500;
    default:
      return 400;
  }
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const HttpError& e) {
    send_error(res, e.status, e.code, e.what());
  } catch (const BackendError& e) {
    send_json(res, 503, {{"error", "backend_unavailable"},
                         {"role", to_string(e.role())},
                         {"cause", to_string(e.cause())},
                         {"detail", e.what()}});
  } catch (const PromptParseError& e) {
    send_error(res, 400, "invalid_prompt", e.what());
  } catch (const Error& e) {
    send_error(res, status_for(e.code()), std::string(to_string(e.code())), e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

std::optional<std::string> field(const httplib::Request& req, const std::string& name) {
  if (req.has_file(name)) return req.get_file_value(name).content;
  if (req.has_param(name)) return req.get_param_value(name);
  return std::nullopt;
}

bool parse_bool(const std::string& name, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw HttpError(400, "invalid_option", name + " must be a boolean");
}

double parse_double(const std::string& name, const std::string& v) {
  double out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) {
    throw HttpError(400, "invalid_option", name + " must be a number");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& name, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) {
    throw HttpError(400, "invalid_option", name + " must be a non-negative integer");
  }
  return out;
}

/// Multipart field `name`, or the raw body when it is sent as image/png.
std::optional<std::string> image_payload(const httplib::Request& req, const std::string& name) {
  if (req.is_multipart_form_data()) {
    if (!req.has_file(name)) return std::nullopt;
    return req.get_file_value(name).content;
  }
  if (name == "image" && !req.body.empty()) return req.body;
  return std::nullopt;
}

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

void check_payload(const std::string& what, const std::string& bytes, std::size_t max) {
  if (bytes.size() > max) {
    throw HttpError(413, "payload_too_large",
                    what + " is " + std::to_string(bytes.size()) + " bytes; limit " + std::to_string(max));
  }
  if (!looks_like_png(as_bytes(bytes))) throw HttpError(422, "unsupported_format", what + " is not a PNG");
}

json job_links(const std::string& id, const std::vector<std::string>& artifacts) {
  json links = {{"self", "/v1/jobs/" + id}};
  json a = json::object();
  for (const auto& name : artifacts) a[name] = "/v1/jobs/" + id + "/artifacts/" + name;
  links["artifacts"] = std::move(a);
  return links;
}

}  // namespace

Gateway::Gateway(ServiceConfig cfg, GatewayOptions opts)
    : cfg_(std::move(cfg)),
      dict_(cfg_.dictionary_path ? load_dictionary(*cfg_.dictionary_path) : builtin_test_dictionary()) {
  cfg_.validate();
  cfg_.moderation.dictionary_version = dict_.get()->version();
  fingerprint_ = sha256_hex(config_fingerprint(cfg_) + "|dictionary:" + std::to_string(dict_.get()->version()) +
                            ":" + std::to_string(dict_.get()->size()));
  if (cfg_.auth_token_env) {
    if (const char* token = std::getenv(cfg_.auth_token_env->c_str()); token && *token) bearer_ = token;
  }
  store_ = std::make_unique<JobStore>(cfg_.storage_path, std::move(opts.clock));

  mock_log_ = std::make_shared<CallLog>();
  BackendSet mocks = opts.mock_backends ? *opts.mock_backends : make_mock_backends(cfg_.mock);
  mock_set_ = limit_concurrency(record_calls(mocks, mock_log_), cfg_.concurrency_per_role);
  live_set_ = limit_concurrency(make_http_backends(cfg_.live_backends), cfg_.concurrency_per_role);

  server_ = std::make_unique<httplib::Server>();
  // Room for an image plus a mask and multipart framing; single images are
  // checked against the limit individually.
  server_->set_payload_max_length(cfg_.max_image_bytes * 2 + (1u << 20));
  install_routes();
  for (int i = 0; i < cfg_.job_workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

Gateway::~Gateway() {
  stop();
  {
    std::lock_guard lock(queue_mu_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  for (auto& t : workers_) {
    if (t.joinable()) t.join();
  }
}

int Gateway::start() {
  const auto colon = cfg_.listen.rfind(':');
  const std::string host = cfg_.listen.substr(0, colon);
  const int port = std::stoi(cfg_.listen.substr(colon + 1));
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw Error(Errc::io_error, "cannot bind " + cfg_.listen);
  listener_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

bool Gateway::run() {
  const auto colon = cfg_.listen.rfind(':');
  port_ = std::stoi(cfg_.listen.substr(colon + 1));
  return server_->listen(cfg_.listen.substr(0, colon), port_);
}

void Gateway::stop() {
  if (server_) server_->stop();
  if (listener_.joinable()) listener_.join();
}

void Gateway::enqueue(std::function<void()> task) {
  {
    std::lock_guard lock(queue_mu_);
    queue_.push_back(std::move(task));
  }
  queue_cv_.notify_one();
}

void Gateway::worker_loop() {
  while (true) {
    std::function<void()> task;
    {
      std::unique_lock lock(queue_mu_);
      queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
      ++busy_;
    }
    task();
    {
      std::lock_guard lock(queue_mu_);
      --busy_;
    }
    idle_cv_.notify_all();
  }
}

void Gateway::wait_idle() {
  std::unique_lock lock(queue_mu_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && busy_ == 0; });
}

const BackendSet& Gateway::backends_for(const httplib::Request& req) const {
  std::string name(to_string(cfg_.default_profile));
  if (req.has_header("X-Stylegate-Profile")) {
    name = req.get_header_value("X-Stylegate-Profile");
  } else if (req.has_param("profile")) {
    name = req.get_param_value("profile");
  }
  if (name == "mock") return mock_set_;
  if (name == "live") return live_set_;
  throw HttpError(400, "invalid_option", "unknown profile '" + name + "'");
}

bool Gateway::authorized(const httplib::Request& req) const {
  if (!bearer_) return true;
  return req.get_header_value("Authorization") == "Bearer " + *bearer_;
}

void Gateway::install_routes() {
  auto& s = *server_;
  s.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (req.path == "/v1/healthz" || authorized(req)) return httplib::Server::HandlerResponse::Unhandled;
    send_error(res, 401, "unauthorized", "missing or wrong bearer token");
    return httplib::Server::HandlerResponse::Handled;
  });
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
    send_error(res, 500, "internal", "unhandled exception");
  });
  s.Get("/v1/healthz", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"status", "ok"}}); });
  s.Post("/v1/moderate", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { handle_moderate(req, res); });
  });
  s.Post("/v1/stylize", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { handle_stylize(req, res); });
  });
  s.Post("/v1/analyze-skin-tone", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { handle_analyze(req, res); });
  });
  s.Get(R"(/v1/jobs/([0-9a-f-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { handle_job(req, res); });
  });
  s.Get(R"(/v1/jobs/([0-9a-f-]+)/artifacts/([A-Za-z0-9_.-]+))",
        [this](const httplib::Request& req, httplib::Response& res) {
          guarded(res, [&] { handle_artifact(req, res); });
        });
}

void Gateway::handle_moderate(const httplib::Request& req, httplib::Response& res) {
  const auto payload = image_payload(req, "image");
  if (!payload) throw HttpError(400, "missing_image", "request carries no image");
  check_payload("image", *payload, cfg_.max_image_bytes);
  const PortraitImage image = decode_png_rgb(as_bytes(*payload));
  const BackendSet& backends = backends_for(req);

  ModerationConfig mcfg = cfg_.moderation;
  if (const auto t = field(req, "threshold")) {
    mcfg.score_threshold = parse_double("threshold", *t);
    if (!(mcfg.score_threshold >= 0.0 && mcfg.score_threshold <= 1.0)) {
      throw HttpError(400, "invalid_option", "threshold must lie in [0, 1]");
    }
  }
  const auto dict = dict_.get();
  const auto record = store_->create(JobRecordKind::moderate, fingerprint_, image_digest(image));
  const ModerationVerdict verdict = moderate(image, mcfg, backends.score, backends.caption, *dict);
  json body = to_json(verdict);
  store_->append_event(record.job_id, "verdict", body, verdict.indeterminate ? "failed" : "done");
  store_->set_result(record.job_id, body);
  body["job_id"] = record.job_id;
  send_json(res, verdict.indeterminate ? 503 : 200, body);
}

void Gateway::run_stylize_job(const std::string& job_id, const PortraitImage& image, const BackendSet& backends,
                              const PipelineConfig& pcfg, bool baseline) {
  try {
    auto log = std::make_shared<CallLog>();
    // score/caption calls are covered by the moderation event
    log->set_listener([this, job_id](const CallRecord& c) {
      if (c.role == BackendRole::score || c.role == BackendRole::caption) return;
      store_->append_event(job_id, "backend_call",
                           {{"role", to_string(c.role)},
                            {"op", c.op},
                            {"input_digest", c.input_digest},
                            {"output_digest", c.output_digest}});
    });
    const BackendSet traced = record_calls(backends, log);
    store_->append_event(job_id, "moderation_started", nullptr, "moderating");

    GuardHooks hooks;
    hooks.job_id = job_id;
    hooks.on_verdict = [this, &job_id](const ModerationVerdict& v) {
      store_->append_event(job_id, "moderation", to_json(v), "moderated");
    };
    const auto dict = dict_.get();
    GuardedResult out = guarded_stylize(image, cfg_.moderation, pcfg, traced, *dict, baseline, hooks);

    json result = {{"verdict", to_json(out.verdict)}};
    if (out.rejection) {
      result["rejection"] = *out.rejection;
      result["links"] = job_links(job_id, {});
      store_->set_result(job_id, result);
      store_->append_event(job_id, "rejected", {{"reason", *out.rejection}}, "rejected");
      return;
    }
    const PipelineJob& job = *out.job;
    result["ledger"] = job_ledger(job);
    std::vector<std::string> names;
    auto save = [&](const std::string& name, const Bytes& bytes) {
      store_->put_artifact(job_id, name, bytes);
      names.push_back(name);
    };
    for (std::size_t k = 0; k < job.stage_results.size(); ++k) {
      const auto& sr = job.stage_results[k];
      save(std::string(to_string(sr.condition.kind)) + ".png", encode_png(sr.condition.pixels));
      if (job.progressive() && k == 0) save("intermediate.png", encode_png(sr.output));
    }
    if (job.finished()) save("output.png", encode_png(job.stage_results.back().output));
    result["links"] = job_links(job_id, names);
    store_->set_result(job_id, result);
    if (job.finished()) {
      store_->append_event(job_id, "completed", nullptr, "done");
    } else {
      store_->append_event(job_id, "failed", {{"error", job.failure.value_or("unknown")}}, "failed");
    }
  } catch (const std::exception& e) {
    store_->append_event(job_id, "failed", {{"error", e.what()}}, "failed");
  }
}

void Gateway::handle_stylize(const httplib::Request& req, httplib::Response& res) {
  const auto payload = image_payload(req, "image");
  if (!payload) throw HttpError(400, "missing_image", "request carries no image");
  check_payload("image", *payload, cfg_.max_image_bytes);
  const PortraitImage image = decode_png_rgb(as_bytes(*payload));
  const BackendSet& backends = backends_for(req);

  PipelineConfig pcfg = cfg_.pipeline;
  bool baseline = false;
  bool wait = true;
  if (const auto v = field(req, "baseline")) baseline = parse_bool("baseline", *v);
  if (const auto v = field(req, "wait")) wait = parse_bool("wait", *v);
  if (const auto v = field(req, "seed")) pcfg.seed = parse_u64("seed", *v);
  if (const auto v = field(req, "style_prompt")) pcfg.style_prompt = parse_prompt(*v);

  const auto record = store_->create(JobRecordKind::stylize, fingerprint_, image_digest(image));
  const std::string id = record.job_id;
  store_->append_event(id, "queued", {{"mode", baseline ? "baseline" : "progressive"}, {"seed", pcfg.seed}},
                       "queued");

  auto done = std::make_shared<std::promise<void>>();
  auto finished = done->get_future();
  enqueue([this, id, image, backends, pcfg, baseline, done] {
    run_stylize_job(id, image, backends, pcfg, baseline);
    done->set_value();
  });
  if (!wait) {
    send_json(res, 202, {{"job_id", id}, {"state", "queued"}, {"links", job_links(id, {})}});
    return;
  }
  finished.wait();
  const JobRecord final_record = *store_->get(id);
  json body = to_json(final_record);
  int status = 200;
  if (final_record.state == "failed") status = 503;
  if (final_record.state == "rejected" && final_record.result.value("rejection", "") == "backend_unavailable") {
    status = 503;
  }
  send_json(res, status, body);
}

void Gateway::handle_job(const httplib::Request& req, httplib::Response& res) {
  const auto record = store_->get(req.matches[1]);
  if (!record) throw HttpError(404, "not_found", "no such job");
  send_json(res, 200, to_json(*record));
}

void Gateway::handle_artifact(const httplib::Request& req, httplib::Response& res) {
  const auto bytes = store_->get_artifact(req.matches[1], req.matches[2]);
  if (!bytes) throw HttpError(404, "not_found", "no such artifact");
  res.status = 200;
  res.set_content(std::string(bytes->begin(), bytes->end()), "image/png");
}

void Gateway::handle_analyze(const httplib::Request& req, httplib::Response& res) {
  const auto payload = image_payload(req, "image");
  if (!payload) throw HttpError(400, "missing_image", "request carries no image");
  check_payload("image", *payload, cfg_.max_image_bytes);
  const PortraitImage image = decode_png_rgb(as_bytes(*payload));

  AnalysisOptions opts;
  if (const auto v = field(req, "bandwidth")) {
    opts.bandwidth = parse_double("bandwidth", *v);
    if (!(*opts.bandwidth > 0.0)) throw HttpError(400, "invalid_option", "bandwidth must be positive");
  }
  if (const auto v = field(req, "source_tag")) opts.source_tag = source_tag_from_string(*v);

  std::string mask_source = "upload";
  std::optional<SkinMask> mask;
  if (const auto m = image_payload(req, "mask")) {
    check_payload("mask", *m, cfg_.max_image_bytes);
    mask = SkinMask::from_plane(decode_png_gray(as_bytes(*m)));
  } else {
    const BackendSet& backends = backends_for(req);
    if (!backends.segmentation) {
      throw BackendError(BackendRole::segmentation, BackendFailure::unavailable, "not configured");
    }
    mask = backends.segmentation->segment(image);
    mask_source = "segmentation";
  }
  if (mask->width() != image.width() || mask->height() != image.height()) {
    throw Error(Errc::dimension_mismatch, "mask and image sizes differ");
  }
  const std::vector<MaskedImage> entries{MaskedImage{image, *mask}};
  const auto dist = analyze_dataset(entries, opts);
  json body = to_json(dist);
  body["emd_to_uniform"] = emd_to_uniform(dist);
  body["mask_source"] = mask_source;
  send_json(res, 200, body);
}

}  // namespace stylegate
