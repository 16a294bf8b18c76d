#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "stylegate/config.hpp"
#include "stylegate/job_store.hpp"
#include "stylegate/keyword_filter.hpp"
#include "stylegate/mock_backends.hpp"

namespace httplib {
class Server;
struct Request;
struct Response;
}  // namespace httplib

namespace stylegate {

struct GatewayOptions {
  StoreClock clock = system_clock_micros;
  /// Replaces the in-process mock set (before call recording is attached).
  std::optional<BackendSet> mock_backends;
};

/// HTTP service: /v1/healthz, /v1/moderate, /v1/stylize, /v1/jobs/{id},
/// /v1/jobs/{id}/artifacts/{name}, /v1/analyze-skin-tone. The constructor
/// validates the config, loads the dictionary and opens the job store, so an
/// invalid setup throws before any socket is bound.
class Gateway {
 public:
  explicit Gateway(ServiceConfig cfg, GatewayOptions opts = {});
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds the configured address (port 0 picks a free one) and serves on a
  /// background thread. Returns the bound port.
  int start();
  /// Binds and serves on the calling thread until stop().
  bool run();
  void stop();
  int port() const { return port_; }

  /// Blocks until every queued stylize job has finished.
  void wait_idle();

  const std::string& fingerprint() const { return fingerprint_; }
  std::shared_ptr<CallLog> mock_calls() const { return mock_log_; }
  JobStore& store() { return *store_; }
  const ServiceConfig& config() const { return cfg_; }

 private:
  void install_routes();
  void worker_loop();
  void enqueue(std::function<void()> task);
  const BackendSet& backends_for(const httplib::Request& req) const;
  bool authorized(const httplib::Request& req) const;

  void handle_moderate(const httplib::Request& req, httplib::Response& res);
  void handle_stylize(const httplib::Request& req, httplib::Response& res);
  void handle_job(const httplib::Request& req, httplib::Response& res);
  void handle_artifact(const httplib::Request& req, httplib::Response& res);
  void handle_analyze(const httplib::Request& req, httplib::Response& res);
  void run_stylize_job(const std::string& job_id, const PortraitImage& image, const BackendSet& backends,
                       const PipelineConfig& pcfg, bool baseline);

  ServiceConfig cfg_;
  std::string fingerprint_;
  std::optional<std::string> bearer_;
  DictionaryHandle dict_;
  std::unique_ptr<JobStore> store_;
  std::shared_ptr<CallLog> mock_log_;
  BackendSet mock_set_;
  BackendSet live_set_;

  std::unique_ptr<httplib::Server> server_;
  std::thread listener_;
  int port_ = 0;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<std::function<void()>> queue_;
  std::size_t busy_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace stylegate
