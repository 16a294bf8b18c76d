#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "stylegate/backend.hpp"
#include "stylegate/prompt_weight.hpp"
#include "stylegate/skintone.hpp"

namespace stylegate {

inline constexpr int kMinAugmentTarget = 40;
inline constexpr int kMaxAugmentTarget = 50;
inline constexpr std::size_t kMaxOriginalImages = 15;

struct DatasetImage {
  std::string path;
  std::optional<std::string> mask_path;
};

struct CharacterDataset {
  std::string id;
  std::vector<DatasetImage> images;
  WeightedPrompt style_prompt;
};

/// Reads `<dir>/dataset.json` when present ({id, style_prompt, images: [{image, mask?}]}),
/// otherwise takes every `*.png` that is not a `*_mask.png`, pairing `x.png` with `x_mask.png`.
CharacterDataset load_dataset_dir(const std::filesystem::path& dir);

enum class JobKind { t2i, i2i };
enum class JobStatus { planned, submitted, accepted, rejected };

std::string_view to_string(JobKind kind);
std::string_view to_string(JobStatus status);
JobKind job_kind_from_string(std::string_view name);
JobStatus job_status_from_string(std::string_view name);

struct AugmentationJob {
  std::size_t index = 0;
  JobKind kind = JobKind::t2i;
  SkinToneTag tag;
  WeightedPrompt prompt;
  std::optional<std::string> source_image;  // required iff kind == i2i
  std::uint64_t seed = 0;
  JobStatus status = JobStatus::planned;
  std::optional<std::string> result_image;
  std::optional<std::string> error;
};

struct AugmentationPlan {
  std::string dataset_id;
  std::size_t original_count = 0;
  int target_total = 0;
  std::uint64_t plan_seed = 0;
  double i2i_ratio = 0.5;
  std::vector<AugmentationJob> jobs;
  std::vector<std::string> warnings;
};

using TagWeights = std::map<std::string, double, std::less<>>;

/// Emits target - |images| jobs. Tags are dealt round-robin in canonical order,
/// kinds follow the i2i ratio as an evenly spread sequence, and seeds and i2i
/// sources come from a generator seeded with `plan_seed`. Tags missing from
/// `tag_weights` get kDefaultTagWeight.
AugmentationPlan plan_augmentation(const CharacterDataset& ds, const TagWeights& tag_weights, int target,
                                   std::uint64_t plan_seed, double i2i_ratio = 0.5);

/// Structural invariants of a plan; returns the list of violations (empty if ok).
std::vector<std::string> check_plan(const AugmentationPlan& plan);

nlohmann::json to_json(const AugmentationPlan& plan);
AugmentationPlan plan_from_json(const nlohmann::json& j);

struct SubmitOptions {
  std::size_t max_in_flight = 4;
  double i2i_strength = 0.6;
  int canvas_width = 512;
  int canvas_height = 512;
};

/// Runs every `planned` job through the diffusion backend (i2i jobs are
/// edge-conditioned on their source), writes results under `out_dir` and marks
/// them `submitted`. Failed jobs keep status `planned` with `error` set.
void submit_plan(AugmentationPlan& plan, const BackendSet& backends, const std::filesystem::path& out_dir,
                 const SubmitOptions& opts = {});

/// Curator decision; only `submitted` jobs may be accepted or rejected.
void review_job(AugmentationPlan& plan, std::size_t index, JobStatus decision);

struct AugmentationValidation {
  bool passed = false;
  double coverage_original = 0.0;
  double coverage_augmented = 0.0;
  double coverage_gain = 0.0;
  double emd_original_to_uniform = 0.0;
  double emd_augmented_to_uniform = 0.0;
};

/// Passes iff the coverage gain reaches `min_coverage_gain` and the augmented
/// set sits strictly closer (EMD) to the uniform reference.
AugmentationValidation validate_augmented(const SkinToneDistribution& original,
                                          const SkinToneDistribution& augmented, double min_coverage_gain);

nlohmann::json to_json(const AugmentationValidation& v);

}  // namespace stylegate
