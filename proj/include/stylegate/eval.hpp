#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "stylegate/backend.hpp"
#include "stylegate/moderation.hpp"

namespace stylegate {

struct ManifestEntry {
  std::string image;
  Label label = Label::neutral;
  std::optional<std::string> caption;
  std::optional<double> score;
};

struct LabeledManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // image paths resolve relative to this
};

/// JSONL, one {image, label, caption?, score?} object per line; blank lines skipped.
LabeledManifest parse_manifest(std::string_view jsonl, std::filesystem::path base_dir = {});
LabeledManifest load_manifest(const std::filesystem::path& path);

/// Positive class is nudity.
struct ConfusionMatrix {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  void add(Label truth, Label predicted);
  std::uint64_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Zero denominators give std::nullopt, never 0 or 1.
struct Metrics {
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1_nudity;
  std::optional<double> precision_neutral;
  std::optional<double> recall_neutral;
  std::optional<double> f1_neutral;
  std::optional<double> f1_macro;     // mean of the two class F1 scores
  std::optional<double> f1_weighted;  // support-weighted mean
};

std::optional<double> harmonic_mean(std::optional<double> p, std::optional<double> r);
Metrics compute_metrics(const ConfusionMatrix& cm);

struct EvalOptions {
  bool offline = true;
  bool skip_errors = false;
};

struct EvalReport {
  std::string name;
  ModerationPaths method = ModerationPaths::ensemble;
  ConfusionMatrix confusion;
  Metrics metrics;
  std::size_t corpus_size = 0;
  std::size_t errors = 0;   // entries whose verdict was indeterminate
  std::size_t skipped = 0;  // errors excluded from the matrix
  std::string config_fingerprint;
  std::vector<Label> predictions;  // per entry; skipped entries keep the fail-closed label
  std::vector<std::string> warnings;
};

/// Offline mode decides from the manifest's precomputed fields and throws
/// Error(missing_offline_fields) if a needed one is absent; online mode loads
/// each image and runs moderate() against `backends`.
EvalReport evaluate(const LabeledManifest& manifest, ModerationPaths method, const ModerationConfig& cfg,
                    const KeywordDictionary& dict, const BackendSet* backends = nullptr,
                    const EvalOptions& opts = {});

std::string config_fingerprint(ModerationPaths method, const ModerationConfig& cfg, const KeywordDictionary& dict);

struct MethodSpec {
  std::string name;
  ModerationPaths method = ModerationPaths::ensemble;
  ModerationConfig cfg;
};

struct MethodComparison {
  std::vector<EvalReport> reports;  // ranked by accuracy, undefined last
  bool recall_dominance = true;     // every ensemble recall >= every component recall
  std::vector<std::string> warnings;
};

MethodComparison compare_methods(const LabeledManifest& manifest, const std::vector<MethodSpec>& methods,
                                 const KeywordDictionary& dict, const BackendSet* backends = nullptr,
                                 const EvalOptions& opts = {});

nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const EvalReport& r);
nlohmann::json to_json(const MethodComparison& c);

}  // namespace stylegate
