#include "stylegate/moderation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <mutex>
#include <thread>

#include "stylegate/error.hpp"

namespace stylegate {

std::string_view to_string(Label label) { return label == Label::nudity ? "nudity" : "neutral"; }

Label label_from_string(std::string_view name) {
  if (name == "nudity") return Label::nudity;
  if (name == "neutral" || name == "normal") return Label::neutral;
  throw Error(Errc::invalid_manifest, "unknown label '" + std::string(name) + "'");
}

std::string_view to_string(ModerationPaths paths) {
  switch (paths) {
    case ModerationPaths::score_only: return "score_only";
    case ModerationPaths::keyword_only: return "keyword_only";
    case ModerationPaths::ensemble: return "ensemble";
  }
  return "ensemble";
}

ModerationPaths moderation_paths_from_string(std::string_view name) {
  if (name == "score_only") return ModerationPaths::score_only;
  if (name == "keyword_only") return ModerationPaths::keyword_only;
  if (name == "ensemble") return ModerationPaths::ensemble;
  throw Error(Errc::invalid_config, "unknown moderation method '" + std::string(name) + "'");
}

void ModerationConfig::validate() const {
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0)) {
    throw Error(Errc::invalid_config, "score_threshold must lie in [0, 1]");
  }
  if (deadline.count() <= 0) throw Error(Errc::invalid_config, "deadline must be positive");
}

ModerationVerdict decide(const PathInputs& in, const ModerationConfig& cfg, const KeywordDictionary& dict) {
  const bool use_score = cfg.paths != ModerationPaths::keyword_only;
  const bool use_keywords = cfg.paths != ModerationPaths::score_only;

  ModerationVerdict v;
  bool score_failed = false;
  bool caption_failed = false;

  if (use_score) {
    if (in.score && std::isfinite(in.score->value) && in.score->value >= 0.0 && in.score->value <= 1.0) {
      v.score = in.score;
      v.score_path_flag = in.score->value >= cfg.score_threshold;
    } else {
      score_failed = true;
      v.errors.push_back(in.score_error ? *in.score_error
                         : in.score     ? "score outside [0, 1]"
                                        : "score unavailable");
    }
  }
  if (use_keywords) {
    if (in.caption) {
      v.caption = in.caption;
      v.keywords = match_keywords(*in.caption, dict);
      v.keyword_path_flag = v.keywords->matched;
    } else {
      caption_failed = true;
      v.errors.push_back(in.caption_error ? *in.caption_error : "caption unavailable");
    }
  }

  const bool flagged = v.score_path_flag || v.keyword_path_flag;
  const bool any_failed = score_failed || caption_failed;
  const bool all_failed = (!use_score || score_failed) && (!use_keywords || caption_failed);
  if (flagged) {
    v.label = Label::nudity;
  } else if (any_failed && (cfg.require_caption || all_failed)) {
    v.label = Label::nudity;
    v.indeterminate = true;
  } else {
    v.label = Label::neutral;
  }
  if (any_failed) {
    v.reason = score_failed && caption_failed ? "backends_unavailable"
               : score_failed                 ? "score_backend_unavailable"
                                              : "caption_backend_unavailable";
    const bool malformed = (use_score && in.score && !v.score) ||
                           std::any_of(v.errors.begin(), v.errors.end(), [](const std::string& e) {
                             return e.find("malformed_response") != std::string::npos;
                           });
    if (malformed) v.reason = "malformed_backend_response";
  }
  return v;
}

namespace {

template <class T>
struct PathSlot {
  std::mutex mu;
  std::condition_variable cv;
  bool done = false;
  std::optional<T> value;
  std::optional<std::string> error;
  double latency_ms = 0.0;
};

// The worker owns shared copies of everything it touches so it can outlive a
// caller that stopped waiting at the deadline.
template <class T, class Fn>
std::shared_ptr<PathSlot<T>> launch_path(Fn fn) {
  auto slot = std::make_shared<PathSlot<T>>();
  std::thread([slot, fn = std::move(fn)]() mutable {
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<T> value;
    std::optional<std::string> error;
    try {
      value = fn();
    } catch (const std::exception& e) {
      error = e.what();
    } catch (...) {
      error = "unknown backend failure";
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    std::lock_guard lock(slot->mu);
    slot->value = std::move(value);
    slot->error = std::move(error);
    slot->latency_ms = ms;
    slot->done = true;
    slot->cv.notify_all();
  }).detach();
  return slot;
}

template <class T>
void collect(PathSlot<T>& slot, std::chrono::steady_clock::time_point deadline, std::string_view role,
             std::optional<T>& value, std::optional<std::string>& error, double& latency) {
  std::unique_lock lock(slot.mu);
  if (!slot.cv.wait_until(lock, deadline, [&] { return slot.done; })) {
    error = std::string(role) + " backend: timeout (deadline exceeded)";
    latency = std::chrono::duration<double, std::milli>(deadline - std::chrono::steady_clock::now()).count();
    return;
  }
  value = slot.value;
  error = slot.error;
  latency = slot.latency_ms;
}

}  // namespace

ModerationVerdict moderate(const PortraitImage& image, const ModerationConfig& cfg,
                           std::shared_ptr<ScoreBackend> score_backend,
                           std::shared_ptr<CaptionBackend> caption_backend, const KeywordDictionary& dict) {
  cfg.validate();
  const bool use_score = cfg.paths != ModerationPaths::keyword_only;
  const bool use_keywords = cfg.paths != ModerationPaths::score_only;
  auto shared_image = std::make_shared<const PortraitImage>(image);
  const auto deadline = std::chrono::steady_clock::now() + cfg.deadline;

  std::shared_ptr<PathSlot<NudityScore>> score_slot;
  std::shared_ptr<PathSlot<Caption>> caption_slot;
  if (use_score) {
    score_slot = launch_path<NudityScore>([backend = score_backend, shared_image]() -> NudityScore {
      if (!backend) throw BackendError(BackendRole::score, BackendFailure::unavailable, "not configured");
      return backend->score(*shared_image);
    });
  }
  if (use_keywords) {
    caption_slot = launch_path<Caption>([backend = caption_backend, shared_image]() -> Caption {
      if (!backend) throw BackendError(BackendRole::caption, BackendFailure::unavailable, "not configured");
      return backend->caption(*shared_image);
    });
  }

  PathInputs inputs;
  double score_ms = 0.0, caption_ms = 0.0;
  if (score_slot) collect(*score_slot, deadline, "score", inputs.score, inputs.score_error, score_ms);
  if (caption_slot) collect(*caption_slot, deadline, "caption", inputs.caption, inputs.caption_error, caption_ms);

  ModerationVerdict verdict = decide(inputs, cfg, dict);
  verdict.score_latency_ms = score_ms;
  verdict.caption_latency_ms = caption_ms;
  return verdict;
}

std::vector<ModerationVerdict> moderate_batch(std::span<const PortraitImage> images, const ModerationConfig& cfg,
                                              std::shared_ptr<ScoreBackend> score_backend,
                                              std::shared_ptr<CaptionBackend> caption_backend,
                                              const KeywordDictionary& dict, std::size_t max_in_flight) {
  std::vector<ModerationVerdict> out(images.size());
  if (images.empty()) return out;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < images.size(); i = next++) {
      try {
        out[i] = moderate(images[i], cfg, score_backend, caption_backend, dict);
      } catch (const std::exception& e) {
        ModerationVerdict v;
        v.label = Label::nudity;
        v.indeterminate = true;
        v.reason = "error";
        v.errors.push_back(e.what());
        out[i] = std::move(v);
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(max_in_flight, images.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return out;
}

nlohmann::json to_json(const ModerationVerdict& v, bool include_latency) {
  nlohmann::json j;
  j["label"] = to_string(v.label);
  j["score"] = v.score ? nlohmann::json(v.score->value) : nlohmann::json(nullptr);
  j["score_flag"] = v.score_path_flag;
  j["keyword_flag"] = v.keyword_path_flag;
  j["hits"] = nlohmann::json::array();
  if (v.keywords) {
    for (const auto& h : v.keywords->hits) j["hits"].push_back({{"entry", h.entry}, {"start", h.start}, {"end", h.end}});
  }
  j["caption"] = v.caption ? nlohmann::json(v.caption->text) : nlohmann::json(nullptr);
  j["indeterminate"] = v.indeterminate;
  j["reason"] = v.reason ? nlohmann::json(*v.reason) : nlohmann::json(nullptr);
  j["errors"] = v.errors;
  if (v.score) j["score_backend"] = v.score->backend_id;
  if (include_latency) {
    j["latency_ms"] = {{"score", v.score_latency_ms}, {"caption", v.caption_latency_ms}};
  }
  return j;
}

}  // namespace stylegate
