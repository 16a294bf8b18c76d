#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "stylegate/error.hpp"
#include "stylegate/image.hpp"
#include "stylegate/keyword_filter.hpp"
#include "stylegate/prompt_weight.hpp"

namespace stylegate {

/// Explicit-content score on a [0, 1] scale, whatever the backend's native
/// measure (classifier probability or concept similarity).
struct NudityScore {
  double value = 0.0;
  std::string backend_id;
};

class ScoreBackend {
 public:
  virtual ~ScoreBackend() = default;
  virtual NudityScore score(const PortraitImage& image) = 0;
};

class CaptionBackend {
 public:
  virtual ~CaptionBackend() = default;
  virtual Caption caption(const PortraitImage& image) = 0;
};

class ConditionBackend {
 public:
  virtual ~ConditionBackend() = default;
  virtual ConditionImage extract(const PortraitImage& image, ConditionKind kind) = 0;
};

/// Absent `condition` means unconditioned generation; `denoising_strength`
/// 1.0 on a blank canvas is how text-to-image is requested.
struct DiffusionRequest {
  PortraitImage image;
  std::optional<ConditionImage> condition;
  WeightedPrompt prompt;
  double denoising_strength = 0.5;
  std::uint64_t seed = 0;
};

class DiffusionBackend {
 public:
  virtual ~DiffusionBackend() = default;
  virtual PortraitImage img2img(const DiffusionRequest& request) = 0;
};

class SegmentationBackend {
 public:
  virtual ~SegmentationBackend() = default;
  virtual SkinMask segment(const PortraitImage& image) = 0;
};

struct BackendSet {
  std::shared_ptr<ScoreBackend> score;
  std::shared_ptr<CaptionBackend> caption;
  std::shared_ptr<ConditionBackend> condition;
  std::shared_ptr<DiffusionBackend> diffusion;
  std::shared_ptr<SegmentationBackend> segmentation;
};

/// Throws BackendError(malformed_response) unless 0 <= value <= 1.
void check_score_range(BackendRole role, double value);

}  // namespace stylegate
