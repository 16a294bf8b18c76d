#include "stylegate/http_backend.hpp"

#include <httplib.h>

#include <cstdlib>
#include <semaphore>

#include "stylegate/wire.hpp"

namespace stylegate {

void check_score_range(BackendRole role, double value) {
  if (!std::isfinite(value) || value < 0.0 || value > 1.0) {
    throw BackendError(role, BackendFailure::malformed_response,
                       "score " + std::to_string(value) + " outside [0, 1]");
  }
}

namespace {

class HttpTransport {
 public:
  explicit HttpTransport(BackendDescriptor d) : desc_(std::move(d)) {
    const auto scheme = desc_.base_url.find("://");
    const auto path_at = desc_.base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    host_ = desc_.base_url.substr(0, path_at);
    prefix_ = path_at == std::string::npos ? "" : desc_.base_url.substr(path_at);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  nlohmann::json post(const nlohmann::json& body) const {
    const BackendRole role = desc_.role;
    httplib::Client cli(host_);
    if (!cli.is_valid()) throw BackendError(role, BackendFailure::unavailable, "invalid base url " + desc_.base_url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(desc_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(desc_.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (desc_.auth_token_env) {
      if (const char* token = std::getenv(desc_.auth_token_env->c_str())) {
        headers.emplace("Authorization", std::string("Bearer ") + token);
      }
    }
    const std::string path = prefix_ + "/" + std::string(to_string(role));
    auto res = cli.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::Read || err == httplib::Error::Write ||
                             err == httplib::Error::ConnectionTimeout;
      throw BackendError(role, timed_out ? BackendFailure::timeout : BackendFailure::unavailable,
                         httplib::to_string(err));
    }
    if (res->status < 200 || res->status >= 300) {
      throw BackendError(role, BackendFailure::http_status, "status " + std::to_string(res->status));
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(role, BackendFailure::malformed_response, e.what());
    }
  }

 private:
  BackendDescriptor desc_;
  std::string host_;
  std::string prefix_;
};

class HttpScore : public ScoreBackend {
 public:
  explicit HttpScore(BackendDescriptor d) : t_(std::move(d)) {}
  NudityScore score(const PortraitImage& image) override {
    return wire::parse_score_response(t_.post(wire::score_request(image)));
  }

 private:
  HttpTransport t_;
};

class HttpCaption : public CaptionBackend {
 public:
  explicit HttpCaption(BackendDescriptor d) : t_(std::move(d)) {}
  Caption caption(const PortraitImage& image) override {
    return wire::parse_caption_response(t_.post(wire::caption_request(image)));
  }

 private:
  HttpTransport t_;
};

class HttpCondition : public ConditionBackend {
 public:
  explicit HttpCondition(BackendDescriptor d) : t_(std::move(d)) {}
  ConditionImage extract(const PortraitImage& image, ConditionKind kind) override {
    return wire::parse_condition_response(t_.post(wire::condition_request(image, kind)), kind);
  }

 private:
  HttpTransport t_;
};

class HttpDiffusion : public DiffusionBackend {
 public:
  explicit HttpDiffusion(BackendDescriptor d) : t_(std::move(d)) {}
  PortraitImage img2img(const DiffusionRequest& req) override {
    return wire::parse_diffusion_response(t_.post(wire::diffusion_request(req)));
  }

 private:
  HttpTransport t_;
};

class HttpSegmentation : public SegmentationBackend {
 public:
  explicit HttpSegmentation(BackendDescriptor d) : t_(std::move(d)) {}
  SkinMask segment(const PortraitImage& image) override {
    return wire::parse_segmentation_response(t_.post(wire::segmentation_request(image)));
  }

 private:
  HttpTransport t_;
};

using Semaphore = std::counting_semaphore<1024>;

class Permit {
 public:
  explicit Permit(Semaphore& s) : s_(s) { s_.acquire(); }
  ~Permit() { s_.release(); }
  Permit(const Permit&) = delete;
  Permit& operator=(const Permit&) = delete;

 private:
  Semaphore& s_;
};

class LimitedScore : public ScoreBackend {
 public:
  LimitedScore(std::shared_ptr<ScoreBackend> inner, std::ptrdiff_t n) : inner_(std::move(inner)), sem_(n) {}
  NudityScore score(const PortraitImage& image) override {
    Permit p(sem_);
    return inner_->score(image);
  }

 private:
  std::shared_ptr<ScoreBackend> inner_;
  Semaphore sem_;
};

class LimitedCaption : public CaptionBackend {
 public:
  LimitedCaption(std::shared_ptr<CaptionBackend> inner, std::ptrdiff_t n) : inner_(std::move(inner)), sem_(n) {}
  Caption caption(const PortraitImage& image) override {
    Permit p(sem_);
    return inner_->caption(image);
  }

 private:
  std::shared_ptr<CaptionBackend> inner_;
  Semaphore sem_;
};

class LimitedCondition : public ConditionBackend {
 public:
  LimitedCondition(std::shared_ptr<ConditionBackend> inner, std::ptrdiff_t n) : inner_(std::move(inner)), sem_(n) {}
  ConditionImage extract(const PortraitImage& image, ConditionKind kind) override {
    Permit p(sem_);
    return inner_->extract(image, kind);
  }

 private:
  std::shared_ptr<ConditionBackend> inner_;
  Semaphore sem_;
};

class LimitedDiffusion : public DiffusionBackend {
 public:
  LimitedDiffusion(std::shared_ptr<DiffusionBackend> inner, std::ptrdiff_t n) : inner_(std::move(inner)), sem_(n) {}
  PortraitImage img2img(const DiffusionRequest& req) override {
    Permit p(sem_);
    return inner_->img2img(req);
  }

 private:
  std::shared_ptr<DiffusionBackend> inner_;
  Semaphore sem_;
};

class LimitedSegmentation : public SegmentationBackend {
 public:
  LimitedSegmentation(std::shared_ptr<SegmentationBackend> inner, std::ptrdiff_t n)
      : inner_(std::move(inner)), sem_(n) {}
  SkinMask segment(const PortraitImage& image) override {
    Permit p(sem_);
    return inner_->segment(image);
  }

 private:
  std::shared_ptr<SegmentationBackend> inner_;
  Semaphore sem_;
};

}  // namespace

BackendSet make_http_backends(const std::vector<BackendDescriptor>& descriptors) {
  BackendSet set;
  for (const auto& d : descriptors) {
    switch (d.role) {
      case BackendRole::score: set.score = std::make_shared<HttpScore>(d); break;
      case BackendRole::caption: set.caption = std::make_shared<HttpCaption>(d); break;
      case BackendRole::condition: set.condition = std::make_shared<HttpCondition>(d); break;
      case BackendRole::diffusion: set.diffusion = std::make_shared<HttpDiffusion>(d); break;
      case BackendRole::segmentation: set.segmentation = std::make_shared<HttpSegmentation>(d); break;
    }
  }
  return set;
}

BackendSet limit_concurrency(const BackendSet& inner, std::ptrdiff_t per_role) {
  if (per_role < 1) per_role = 1;
  BackendSet out;
  if (inner.score) out.score = std::make_shared<LimitedScore>(inner.score, per_role);
  if (inner.caption) out.caption = std::make_shared<LimitedCaption>(inner.caption, per_role);
  if (inner.condition) out.condition = std::make_shared<LimitedCondition>(inner.condition, per_role);
  if (inner.diffusion) out.diffusion = std::make_shared<LimitedDiffusion>(inner.diffusion, per_role);
  if (inner.segmentation) out.segmentation = std::make_shared<LimitedSegmentation>(inner.segmentation, per_role);
  return out;
}

BackendProtocolServer::BackendProtocolServer(BackendSet backends, std::optional<std::string> bearer_token)
    : backends_(std::move(backends)), bearer_(std::move(bearer_token)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

BackendProtocolServer::~BackendProtocolServer() { stop(); }

void BackendProtocolServer::install_routes() {
  auto handle = [this](auto&& fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      if (bearer_ && req.get_header_value("Authorization") != "Bearer " + *bearer_) {
        res.status = 401;
        res.set_content(R"({"error":"unauthorized"})", "application/json");
        return;
      }
      try {
        const auto body = nlohmann::json::parse(req.body);
        res.set_content(fn(body).dump(), "application/json");
      } catch (const nlohmann::json::exception& e) {
        res.status = 400;
        res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
      } catch (const BackendError& e) {
        res.status = 503;
        res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 422;
        res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
      }
    };
  };
  auto missing = [](BackendRole role) {
    return BackendError(role, BackendFailure::unavailable, "role not configured on this server");
  };
  server_->Post("/score", handle([this, missing](const nlohmann::json& j) {
    if (!backends_.score) throw missing(BackendRole::score);
    return wire::score_response(backends_.score->score(wire::parse_image_request(j)));
  }));
  server_->Post("/caption", handle([this, missing](const nlohmann::json& j) {
    if (!backends_.caption) throw missing(BackendRole::caption);
    return wire::caption_response(backends_.caption->caption(wire::parse_image_request(j)));
  }));
  server_->Post("/condition", handle([this, missing](const nlohmann::json& j) {
    if (!backends_.condition) throw missing(BackendRole::condition);
    return wire::condition_response(
        backends_.condition->extract(wire::parse_image_request(j), wire::parse_condition_kind(j)));
  }));
  server_->Post("/diffusion", handle([this, missing](const nlohmann::json& j) {
    if (!backends_.diffusion) throw missing(BackendRole::diffusion);
    return wire::diffusion_response(backends_.diffusion->img2img(wire::parse_diffusion_request(j)));
  }));
  server_->Post("/segmentation", handle([this, missing](const nlohmann::json& j) {
    if (!backends_.segmentation) throw missing(BackendRole::segmentation);
    return wire::segmentation_response(backends_.segmentation->segment(wire::parse_image_request(j)));
  }));
}

int BackendProtocolServer::start(const std::string& host, int port) {
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw Error(Errc::io_error, "cannot bind backend server on " + host);
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

bool BackendProtocolServer::listen(const std::string& host, int port) {
  port_ = port;
  return server_->listen(host, port);
}

void BackendProtocolServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace stylegate
