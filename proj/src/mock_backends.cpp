#include "stylegate/mock_backends.hpp"

#include <algorithm>
#include <atomic>
#include <random>
#include <thread>

namespace stylegate {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

NudityScore MockScoreBackend::score(const PortraitImage& image) {
  if (!overrides_.empty()) {
    const auto it = overrides_.find(image_digest(image));
    if (it != overrides_.end()) return {it->second, "mock-score"};
  }
  if (mode_ == Mode::pixel_probe) return {image.at(0, 0).r / 255.0, "mock-score-probe"};
  return {value_, "mock-score"};
}

MockCaptionBackend::MockCaptionBackend(std::uint64_t seed, std::vector<std::string> table)
    : seed_(seed), table_(std::move(table)) {
  if (table_.empty()) table_ = default_table();
}

std::vector<std::string> MockCaptionBackend::default_table() {
  return {"a portrait of a person smiling",
          "a woman standing in front of a wall",
          "a man wearing a jacket",
          "a close up of a face",
          "a person with long hair",
          "a cartoon character posing",
          "a couple taking a selfie",
          "a child holding a glass of water"};
}

Caption MockCaptionBackend::caption(const PortraitImage& image) {
  const std::string digest = image_digest(image);
  if (const auto it = overrides_.find(digest); it != overrides_.end()) return {it->second, "en"};
  const std::uint64_t key = fnv1a(digest) ^ (seed_ * 0x9E3779B97F4A7C15ULL);
  return {table_[key % table_.size()], "en"};
}

ConditionImage MockConditionBackend::extract(const PortraitImage& image, ConditionKind kind) {
  const Plane luma = luminance(image);
  ConditionImage out{kind, Plane(luma.rows(), luma.cols())};
  if (kind == ConditionKind::depth) {
    out.pixels = (255 - luma.cast<int>()).cast<std::uint8_t>();
    return out;
  }
  const Eigen::ArrayXXi l = luma.cast<int>();
  Eigen::ArrayXXi grad = Eigen::ArrayXXi::Zero(l.rows(), l.cols());
  if (l.cols() > 1) grad.leftCols(l.cols() - 1) += (l.rightCols(l.cols() - 1) - l.leftCols(l.cols() - 1)).abs();
  if (l.rows() > 1) grad.topRows(l.rows() - 1) += (l.bottomRows(l.rows() - 1) - l.topRows(l.rows() - 1)).abs();
  out.pixels = grad.min(255).cast<std::uint8_t>();
  return out;
}

PortraitImage MockDiffusionBackend::img2img(const DiffusionRequest& req) {
  if (profile_ == Profile::identity) return req.image;
  const double s = std::clamp(req.denoising_strength, 0.0, 1.0);
  std::mt19937_64 rng(req.seed ^ fnv1a(serialize_prompt(req.prompt)));
  PortraitImage out(req.image.width(), req.image.height());
  Eigen::ArrayXXd bias = Eigen::ArrayXXd::Zero(req.image.height(), req.image.width());
  if (req.condition && req.condition->height() == req.image.height() && req.condition->width() == req.image.width()) {
    bias = (req.condition->pixels.cast<double>() - 128.0) / 8.0;
  }
  for (int c = 0; c < 3; ++c) {
    const Eigen::ArrayXXd x = req.image.channel(c).cast<double>();
    Eigen::ArrayXXd noise(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise(i) = static_cast<double>(rng() % 17) - 8.0;
    const Eigen::ArrayXXd posterised = (x / 64.0).floor() * 64.0 + 32.0;
    const Eigen::ArrayXXd target = (posterised + noise + bias).max(0.0).min(255.0);
    out.channel(c) = ((1.0 - s) * x + s * target).round().max(0.0).min(255.0).cast<std::uint8_t>();
  }
  return out;
}

SkinMask MockSegmentationBackend::segment(const PortraitImage& image) {
  const Eigen::ArrayXXi r = image.channel(0).cast<int>();
  const Eigen::ArrayXXi g = image.channel(1).cast<int>();
  const Eigen::ArrayXXi b = image.channel(2).cast<int>();
  const Eigen::ArrayXXi spread = r.max(g).max(b) - r.min(g).min(b);
  const auto skin = (r > 95) && (g > 40) && (b > 20) && (spread > 15) && ((r - g).abs() > 15) && (r > g) && (r > b);
  return SkinMask(MaskPlane(skin));
}

void CallLog::record(CallRecord r) {
  std::lock_guard lock(mu_);
  r.seq = calls_.size();
  calls_.push_back(std::move(r));
  if (listener_) listener_(calls_.back());
}

void CallLog::set_listener(std::function<void(const CallRecord&)> fn) {
  std::lock_guard lock(mu_);
  listener_ = std::move(fn);
}

std::vector<CallRecord> CallLog::snapshot() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t CallLog::count(BackendRole role) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::count_if(calls_.begin(), calls_.end(), [&](const CallRecord& c) { return c.role == role; }));
}

std::vector<std::string> CallLog::ops() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& c : calls_) out.push_back(c.op);
  return out;
}

void CallLog::clear() {
  std::lock_guard lock(mu_);
  calls_.clear();
}

namespace {

class RecordingScore : public ScoreBackend {
 public:
  RecordingScore(std::shared_ptr<ScoreBackend> inner, std::shared_ptr<CallLog> log)
      : inner_(std::move(inner)), log_(std::move(log)) {}
  NudityScore score(const PortraitImage& image) override {
    auto out = inner_->score(image);
    log_->record({0, BackendRole::score, "score", image_digest(image), std::to_string(out.value)});
    return out;
  }

 private:
  std::shared_ptr<ScoreBackend> inner_;
  std::shared_ptr<CallLog> log_;
};

class RecordingCaption : public CaptionBackend {
 public:
  RecordingCaption(std::shared_ptr<CaptionBackend> inner, std::shared_ptr<CallLog> log)
      : inner_(std::move(inner)), log_(std::move(log)) {}
  Caption caption(const PortraitImage& image) override {
    auto out = inner_->caption(image);
    log_->record({0, BackendRole::caption, "caption", image_digest(image), out.text});
    return out;
  }

 private:
  std::shared_ptr<CaptionBackend> inner_;
  std::shared_ptr<CallLog> log_;
};

class RecordingCondition : public ConditionBackend {
 public:
  RecordingCondition(std::shared_ptr<ConditionBackend> inner, std::shared_ptr<CallLog> log)
      : inner_(std::move(inner)), log_(std::move(log)) {}
  ConditionImage extract(const PortraitImage& image, ConditionKind kind) override {
    auto out = inner_->extract(image, kind);
    log_->record({0, BackendRole::condition, std::string(to_string(kind)) + "-condition", image_digest(image),
                  plane_digest(out.pixels)});
    return out;
  }

 private:
  std::shared_ptr<ConditionBackend> inner_;
  std::shared_ptr<CallLog> log_;
};

class RecordingDiffusion : public DiffusionBackend {
 public:
  RecordingDiffusion(std::shared_ptr<DiffusionBackend> inner, std::shared_ptr<CallLog> log)
      : inner_(std::move(inner)), log_(std::move(log)) {}
  PortraitImage img2img(const DiffusionRequest& req) override {
    auto out = inner_->img2img(req);
    log_->record({0, BackendRole::diffusion, "i2i", image_digest(req.image), image_digest(out)});
    return out;
  }

 private:
  std::shared_ptr<DiffusionBackend> inner_;
  std::shared_ptr<CallLog> log_;
};

class RecordingSegmentation : public SegmentationBackend {
 public:
  RecordingSegmentation(std::shared_ptr<SegmentationBackend> inner, std::shared_ptr<CallLog> log)
      : inner_(std::move(inner)), log_(std::move(log)) {}
  SkinMask segment(const PortraitImage& image) override {
    auto out = inner_->segment(image);
    log_->record({0, BackendRole::segmentation, "segment", image_digest(image), plane_digest(out.to_plane())});
    return out;
  }

 private:
  std::shared_ptr<SegmentationBackend> inner_;
  std::shared_ptr<CallLog> log_;
};

class FaultGate {
 public:
  FaultGate(BackendRole role, FaultSpec spec) : role_(role), spec_(std::move(spec)) {}
  void check() {
    const std::size_t call = calls_++;
    if (spec_.delay.count() > 0) std::this_thread::sleep_for(spec_.delay);
    if (spec_.fail_all || spec_.fail_calls.count(call) != 0) {
      throw BackendError(role_, spec_.cause, "injected fault on call " + std::to_string(call));
    }
  }

 private:
  BackendRole role_;
  FaultSpec spec_;
  std::atomic<std::size_t> calls_{0};
};

class FaultyScore : public ScoreBackend {
 public:
  FaultyScore(std::shared_ptr<ScoreBackend> inner, FaultSpec spec)
      : inner_(std::move(inner)), gate_(BackendRole::score, std::move(spec)) {}
  NudityScore score(const PortraitImage& image) override {
    gate_.check();
    return inner_->score(image);
  }

 private:
  std::shared_ptr<ScoreBackend> inner_;
  FaultGate gate_;
};

class FaultyCaption : public CaptionBackend {
 public:
  FaultyCaption(std::shared_ptr<CaptionBackend> inner, FaultSpec spec)
      : inner_(std::move(inner)), gate_(BackendRole::caption, std::move(spec)) {}
  Caption caption(const PortraitImage& image) override {
    gate_.check();
    return inner_->caption(image);
  }

 private:
  std::shared_ptr<CaptionBackend> inner_;
  FaultGate gate_;
};

class FaultyCondition : public ConditionBackend {
 public:
  FaultyCondition(std::shared_ptr<ConditionBackend> inner, FaultSpec spec)
      : inner_(std::move(inner)), gate_(BackendRole::condition, std::move(spec)) {}
  ConditionImage extract(const PortraitImage& image, ConditionKind kind) override {
    gate_.check();
    return inner_->extract(image, kind);
  }

 private:
  std::shared_ptr<ConditionBackend> inner_;
  FaultGate gate_;
};

class FaultyDiffusion : public DiffusionBackend {
 public:
  FaultyDiffusion(std::shared_ptr<DiffusionBackend> inner, FaultSpec spec)
      : inner_(std::move(inner)), gate_(BackendRole::diffusion, std::move(spec)) {}
  PortraitImage img2img(const DiffusionRequest& req) override {
    gate_.check();
    return inner_->img2img(req);
  }

 private:
  std::shared_ptr<DiffusionBackend> inner_;
  FaultGate gate_;
};

class FaultySegmentation : public SegmentationBackend {
 public:
  FaultySegmentation(std::shared_ptr<SegmentationBackend> inner, FaultSpec spec)
      : inner_(std::move(inner)), gate_(BackendRole::segmentation, std::move(spec)) {}
  SkinMask segment(const PortraitImage& image) override {
    gate_.check();
    return inner_->segment(image);
  }

 private:
  std::shared_ptr<SegmentationBackend> inner_;
  FaultGate gate_;
};

}  // namespace

BackendSet record_calls(const BackendSet& inner, std::shared_ptr<CallLog> log) {
  BackendSet out;
  if (inner.score) out.score = std::make_shared<RecordingScore>(inner.score, log);
  if (inner.caption) out.caption = std::make_shared<RecordingCaption>(inner.caption, log);
  if (inner.condition) out.condition = std::make_shared<RecordingCondition>(inner.condition, log);
  if (inner.diffusion) out.diffusion = std::make_shared<RecordingDiffusion>(inner.diffusion, log);
  if (inner.segmentation) out.segmentation = std::make_shared<RecordingSegmentation>(inner.segmentation, log);
  return out;
}

BackendSet inject_faults(const BackendSet& inner, BackendRole role, FaultSpec spec) {
  BackendSet out = inner;
  switch (role) {
    case BackendRole::score: out.score = std::make_shared<FaultyScore>(inner.score, std::move(spec)); break;
    case BackendRole::caption: out.caption = std::make_shared<FaultyCaption>(inner.caption, std::move(spec)); break;
    case BackendRole::condition:
      out.condition = std::make_shared<FaultyCondition>(inner.condition, std::move(spec));
      break;
    case BackendRole::diffusion:
      out.diffusion = std::make_shared<FaultyDiffusion>(inner.diffusion, std::move(spec));
      break;
    case BackendRole::segmentation:
      out.segmentation = std::make_shared<FaultySegmentation>(inner.segmentation, std::move(spec));
      break;
  }
  return out;
}

BackendSet make_mock_backends(const MockProfileOptions& opts) {
  auto score = std::make_shared<MockScoreBackend>(
      opts.default_score, opts.score_probe ? MockScoreBackend::Mode::pixel_probe : MockScoreBackend::Mode::fixed);
  for (const auto& [digest, value] : opts.score_overrides) score->set_override(digest, value);
  auto caption = std::make_shared<MockCaptionBackend>(opts.caption_seed);
  for (const auto& [digest, text] : opts.caption_overrides) caption->set_override(digest, text);
  return BackendSet{score, caption, std::make_shared<MockConditionBackend>(),
                    std::make_shared<MockDiffusionBackend>(opts.diffusion),
                    std::make_shared<MockSegmentationBackend>()};
}

}  // namespace stylegate
