#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stylegate/backend.hpp"
#include "stylegate/moderation.hpp"

namespace stylegate {

inline constexpr double kDefaultEdgeStrength = 0.4;
inline constexpr double kDefaultDepthStrength = 0.5;
inline constexpr double kDefaultBaselineStrength = 0.9;

struct StageConfig {
  ConditionKind condition_kind = ConditionKind::edge;
  double denoising_strength = kDefaultEdgeStrength;
  WeightedPrompt prompt;
  std::uint64_t seed = 0;
};

/// Where the stage-2 depth map is extracted from.
enum class DepthSource { intermediate, original };

std::string_view to_string(DepthSource s);
DepthSource depth_source_from_string(std::string_view name);

struct PipelineConfig {
  double edge_strength = kDefaultEdgeStrength;
  double depth_strength = kDefaultDepthStrength;
  double baseline_strength = kDefaultBaselineStrength;
  WeightedPrompt style_prompt;
  std::uint64_t seed = 0;
  DepthSource depth_source = DepthSource::intermediate;

  /// Edge stage with `seed`, depth stage with `seed + 1`, both on the style prompt.
  std::array<StageConfig, 2> progressive_stages() const;
  StageConfig baseline_stage() const;
  /// Throws Error(invalid_config).
  void validate() const;
};

enum class JobState { created, stage1_running, stage1_done, stage2_running, done, failed };

std::string_view to_string(JobState s);

struct StageResult {
  ConditionImage condition;
  PortraitImage output;
};

/// Two stages in progressive mode, one (depth) in baseline mode.
struct PipelineJob {
  std::string job_id;
  PortraitImage input;
  std::vector<StageConfig> stages;
  DepthSource depth_source = DepthSource::intermediate;
  std::vector<StageResult> stage_results;
  JobState state = JobState::created;
  std::vector<JobState> history{JobState::created};
  std::optional<std::string> failure;

  bool progressive() const { return stages.size() == 2; }
  bool finished() const { return state == JobState::done; }
};

PipelineJob make_progressive_job(const PortraitImage& input, const PipelineConfig& cfg, std::string job_id = {});
PipelineJob make_baseline_job(const PortraitImage& input, const PipelineConfig& cfg, std::string job_id = {});

/// Runs the stages that have not completed yet. On a backend or dimension
/// error the job moves to `failed` with completed stages kept, and the error is
/// rethrown; calling again resumes from the first incomplete stage.
void run_job(PipelineJob& job, const BackendSet& backends);

/// Stage 1: i2i(x, edge(x), 0.4) -> x_tilde. Stage 2: i2i(x_tilde, depth(x_tilde), 0.5) -> x_bar.
std::pair<PortraitImage, PortraitImage> run_progressive(const PortraitImage& x, const PipelineConfig& cfg,
                                                        const BackendSet& backends);

/// Single depth-conditioned pass at `strength`.
PortraitImage run_baseline(const PortraitImage& x, double strength, const PipelineConfig& cfg,
                           const BackendSet& backends);

struct GuardedResult {
  ModerationVerdict verdict;
  std::optional<std::string> rejection;  // "nudity" or "backend_unavailable"
  std::optional<PipelineJob> job;
};

struct GuardHooks {
  std::string job_id;
  /// Runs after the verdict is final and before any condition or diffusion call.
  std::function<void(const ModerationVerdict&)> on_verdict;
};

/// Moderation first; a nudity verdict returns a rejection without touching the
/// condition or diffusion backends. A backend failure during the stages leaves
/// the returned job in `failed` (resumable with run_job) instead of throwing.
GuardedResult guarded_stylize(const PortraitImage& x, const ModerationConfig& mcfg, const PipelineConfig& pcfg,
                              const BackendSet& backends, const KeywordDictionary& dict, bool baseline = false,
                              const GuardHooks& hooks = {});

/// Job ledger: configs, state history and stage digests (no pixel payloads).
nlohmann::json job_ledger(const PipelineJob& job);

}  // namespace stylegate
