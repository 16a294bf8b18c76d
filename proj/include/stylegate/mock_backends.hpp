#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "stylegate/backend.hpp"

namespace stylegate {

/// Score from a digest override table, else either a fixed value or, in probe
/// mode, the red value of the top-left pixel divided by 255.
class MockScoreBackend : public ScoreBackend {
 public:
  enum class Mode { fixed, pixel_probe };

  explicit MockScoreBackend(double value = 0.0, Mode mode = Mode::fixed) : value_(value), mode_(mode) {}

  void set_override(const std::string& digest, double value) { overrides_[digest] = value; }
  NudityScore score(const PortraitImage& image) override;

 private:
  double value_;
  Mode mode_;
  std::map<std::string, double> overrides_;
};

/// Caption from a digest override table, else a seeded lookup into a fixed
/// caption table keyed by the image content.
class MockCaptionBackend : public CaptionBackend {
 public:
  explicit MockCaptionBackend(std::uint64_t seed = 0, std::vector<std::string> table = default_table());

  static std::vector<std::string> default_table();
  void set_override(const std::string& digest, std::string caption) { overrides_[digest] = std::move(caption); }
  Caption caption(const PortraitImage& image) override;

 private:
  std::uint64_t seed_;
  std::vector<std::string> table_;
  std::map<std::string, std::string> overrides_;
};

/// edge: forward-difference gradient magnitude of luma; depth: inverted luma.
class MockConditionBackend : public ConditionBackend {
 public:
  ConditionImage extract(const PortraitImage& image, ConditionKind kind) override;
};

class MockDiffusionBackend : public DiffusionBackend {
 public:
  /// identity returns the input unchanged; deterministic blends the input
  /// towards a posterised, seed-noised target by the denoising strength.
  enum class Profile { identity, deterministic };

  explicit MockDiffusionBackend(Profile profile = Profile::deterministic) : profile_(profile) {}
  PortraitImage img2img(const DiffusionRequest& request) override;

 private:
  Profile profile_;
};

/// Rule-based RGB skin classifier.
class MockSegmentationBackend : public SegmentationBackend {
 public:
  SkinMask segment(const PortraitImage& image) override;
};

struct CallRecord {
  std::size_t seq = 0;
  BackendRole role = BackendRole::score;
  std::string op;  // score, caption, edge-condition, depth-condition, i2i, segment
  std::string input_digest;
  std::string output_digest;
};

class CallLog {
 public:
  void record(CallRecord r);
  std::vector<CallRecord> snapshot() const;
  std::size_t count(BackendRole role) const;
  std::vector<std::string> ops() const;
  void clear();
  /// Called under the log lock right after each record is appended.
  void set_listener(std::function<void(const CallRecord&)> fn);

 private:
  mutable std::mutex mu_;
  std::vector<CallRecord> calls_;
  std::function<void(const CallRecord&)> listener_;
};

/// Wraps every configured backend so successful calls land in `log`.
BackendSet record_calls(const BackendSet& inner, std::shared_ptr<CallLog> log);

struct FaultSpec {
  bool fail_all = false;
  std::set<std::size_t> fail_calls;  // 0-based call indices
  BackendFailure cause = BackendFailure::unavailable;
  std::chrono::milliseconds delay{0};
};

/// Replaces the backend for `role` with one that fails per `spec`.
BackendSet inject_faults(const BackendSet& inner, BackendRole role, FaultSpec spec);

struct MockProfileOptions {
  double default_score = 0.0;
  bool score_probe = true;
  std::map<std::string, double> score_overrides;
  std::uint64_t caption_seed = 0;
  std::map<std::string, std::string> caption_overrides;
  MockDiffusionBackend::Profile diffusion = MockDiffusionBackend::Profile::deterministic;
};

BackendSet make_mock_backends(const MockProfileOptions& opts = {});

}  // namespace stylegate
