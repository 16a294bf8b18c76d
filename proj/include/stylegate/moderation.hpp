#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "stylegate/backend.hpp"
#include "stylegate/keyword_filter.hpp"

namespace stylegate {

enum class Label { neutral, nudity };

std::string_view to_string(Label label);
Label label_from_string(std::string_view name);

/// Which detection paths participate in a verdict.
enum class ModerationPaths { score_only, keyword_only, ensemble };

std::string_view to_string(ModerationPaths paths);
ModerationPaths moderation_paths_from_string(std::string_view name);

struct ModerationConfig {
  double score_threshold = 0.6;
  /// Fail closed: any unavailable path makes an unflagged verdict nudity.
  bool require_caption = true;
  long dictionary_version = 0;
  ModerationPaths paths = ModerationPaths::ensemble;
  std::chrono::milliseconds deadline{10'000};

  /// Throws Error(invalid_config).
  void validate() const;
};

/// What each path produced. A missing value with an error means the path failed.
struct PathInputs {
  std::optional<NudityScore> score;
  std::optional<std::string> score_error;
  std::optional<Caption> caption;
  std::optional<std::string> caption_error;
};

struct ModerationVerdict {
  Label label = Label::neutral;
  bool score_path_flag = false;
  bool keyword_path_flag = false;
  /// Set when the label comes from the fail-closed rule rather than a path.
  bool indeterminate = false;
  std::optional<std::string> reason;
  std::optional<NudityScore> score;
  std::optional<Caption> caption;
  std::optional<KeywordMatchResult> keywords;
  std::vector<std::string> errors;
  double score_latency_ms = 0.0;
  double caption_latency_ms = 0.0;
};

/// Pure verdict rule: label is a function of (score, caption, dictionary, config).
ModerationVerdict decide(const PathInputs& inputs, const ModerationConfig& cfg,
                         const KeywordDictionary& dict);

/// Runs the score and caption paths concurrently, joins them (or gives up at
/// cfg.deadline) and applies decide(). Backend failures never escape; they
/// become indeterminate verdicts per the fail-closed policy.
ModerationVerdict moderate(const PortraitImage& image, const ModerationConfig& cfg,
                           std::shared_ptr<ScoreBackend> score_backend,
                           std::shared_ptr<CaptionBackend> caption_backend,
                           const KeywordDictionary& dict);

/// Output order equals input order; one item failing does not affect others.
std::vector<ModerationVerdict> moderate_batch(std::span<const PortraitImage> images,
                                              const ModerationConfig& cfg,
                                              std::shared_ptr<ScoreBackend> score_backend,
                                              std::shared_ptr<CaptionBackend> caption_backend,
                                              const KeywordDictionary& dict,
                                              std::size_t max_in_flight = 4);

/// {label, score, score_flag, keyword_flag, hits[], ...}. Latencies are
/// omitted unless requested so that verdict documents are reproducible.
nlohmann::json to_json(const ModerationVerdict& verdict, bool include_latency = false);

}  // namespace stylegate
