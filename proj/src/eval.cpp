#include "stylegate/eval.hpp"

#include <algorithm>
#include <sstream>

#include "stylegate/error.hpp"
#include "stylegate/util.hpp"

namespace stylegate {

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

LabeledManifest parse_manifest(std::string_view jsonl, std::filesystem::path base_dir) {
  LabeledManifest m;
  m.base_dir = std::move(base_dir);
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.image = j.value("image", std::string());
      e.label = label_from_string(j.at("label").get<std::string>());
      if (j.contains("caption") && !j["caption"].is_null()) e.caption = j["caption"].get<std::string>();
      if (j.contains("score") && !j["score"].is_null()) {
        e.score = j["score"].get<double>();
        if (!(*e.score >= 0.0 && *e.score <= 1.0)) throw Error(Errc::invalid_manifest, "score outside [0, 1]");
      }
      m.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::invalid_manifest, "manifest line " + std::to_string(lineno) + ": " + ex.what());
    } catch (const Error& ex) {
      throw Error(Errc::invalid_manifest, "manifest line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return m;
}

LabeledManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text_file(path), path.parent_path());
}

void ConfusionMatrix::add(Label truth, Label predicted) {
  if (truth == Label::nudity) {
    (predicted == Label::nudity ? tp : fn)++;
  } else {
    (predicted == Label::nudity ? fp : tn)++;
  }
}

std::optional<double> harmonic_mean(std::optional<double> p, std::optional<double> r) {
  if (!p || !r) return std::nullopt;
  if (*p + *r == 0.0) return 0.0;
  return 2.0 * *p * *r / (*p + *r);
}

Metrics compute_metrics(const ConfusionMatrix& cm) {
  Metrics m;
  m.accuracy = ratio(cm.tp + cm.tn, cm.total());
  m.precision = ratio(cm.tp, cm.tp + cm.fp);
  m.recall = ratio(cm.tp, cm.tp + cm.fn);
  m.f1_nudity = harmonic_mean(m.precision, m.recall);
  m.precision_neutral = ratio(cm.tn, cm.tn + cm.fn);
  m.recall_neutral = ratio(cm.tn, cm.tn + cm.fp);
  m.f1_neutral = harmonic_mean(m.precision_neutral, m.recall_neutral);
  if (m.f1_nudity && m.f1_neutral) m.f1_macro = (*m.f1_nudity + *m.f1_neutral) / 2.0;

  const std::uint64_t pos = cm.tp + cm.fn;
  const std::uint64_t neg = cm.tn + cm.fp;
  if (pos + neg > 0 && (pos == 0 || m.f1_nudity) && (neg == 0 || m.f1_neutral)) {
    const double wn = pos == 0 ? 0.0 : static_cast<double>(pos) * *m.f1_nudity;
    const double wu = neg == 0 ? 0.0 : static_cast<double>(neg) * *m.f1_neutral;
    m.f1_weighted = (wn + wu) / static_cast<double>(pos + neg);
  }
  return m;
}

std::string config_fingerprint(ModerationPaths method, const ModerationConfig& cfg, const KeywordDictionary& dict) {
  nlohmann::json j = {{"method", to_string(method)},
                      {"score_threshold", cfg.score_threshold},
                      {"require_caption", cfg.require_caption},
                      {"dictionary_version", dict.version()},
                      {"dictionary_entries", dict.entries()}};
  return sha256_hex(j.dump());
}

EvalReport evaluate(const LabeledManifest& manifest, ModerationPaths method, const ModerationConfig& cfg_in,
                    const KeywordDictionary& dict, const BackendSet* backends, const EvalOptions& opts) {
  ModerationConfig cfg = cfg_in;
  cfg.paths = method;
  cfg.validate();
  const bool needs_score = method != ModerationPaths::keyword_only;
  const bool needs_caption = method != ModerationPaths::score_only;

  EvalReport report;
  report.name = std::string(to_string(method));
  report.method = method;
  report.corpus_size = manifest.entries.size();
  report.config_fingerprint = config_fingerprint(method, cfg, dict);

  if (opts.offline) {
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
      const auto& e = manifest.entries[i];
      if ((needs_score && !e.score) || (needs_caption && !e.caption)) {
        throw Error(Errc::missing_offline_fields, "entry " + std::to_string(i) + " ('" + e.image +
                                                      "') lacks the precomputed fields for " +
                                                      std::string(to_string(method)));
      }
    }
  } else if (backends == nullptr) {
    throw Error(Errc::invalid_config, "online evaluation needs backends");
  }

  for (const auto& e : manifest.entries) {
    ModerationVerdict v;
    if (opts.offline) {
      PathInputs in;
      if (e.score) in.score = NudityScore{*e.score, "manifest"};
      if (e.caption) in.caption = Caption{*e.caption, std::nullopt};
      v = decide(in, cfg, dict);
    } else {
      try {
        const auto image = load_png_rgb((manifest.base_dir / e.image).string());
        v = moderate(image, cfg, backends->score, backends->caption, dict);
      } catch (const std::exception& ex) {
        v.label = Label::nudity;
        v.indeterminate = true;
        v.reason = "error";
        v.errors.push_back(ex.what());
      }
    }
    report.predictions.push_back(v.label);
    if (v.indeterminate) {
      ++report.errors;
      if (opts.skip_errors) {
        ++report.skipped;
        continue;
      }
    }
    report.confusion.add(e.label, v.label);
  }

  report.metrics = compute_metrics(report.confusion);
  if (!report.metrics.recall) report.warnings.push_back("recall undefined: no nudity entries in the corpus");
  if (!report.metrics.precision) report.warnings.push_back("precision undefined: nothing was flagged");
  if (report.errors > 0) {
    report.warnings.push_back(std::to_string(report.errors) + " entries had backend errors" +
                              (opts.skip_errors ? " and were excluded" : " and count as fail-closed nudity"));
  }
  return report;
}

MethodComparison compare_methods(const LabeledManifest& manifest, const std::vector<MethodSpec>& methods,
                                 const KeywordDictionary& dict, const BackendSet* backends, const EvalOptions& opts) {
  if (methods.size() < 2) throw Error(Errc::invalid_config, "comparison needs at least two methods");
  MethodComparison out;
  for (const auto& spec : methods) {
    EvalReport r = evaluate(manifest, spec.method, spec.cfg, dict, backends, opts);
    r.name = spec.name.empty() ? std::string(to_string(spec.method)) : spec.name;
    out.reports.push_back(std::move(r));
  }
  for (const auto& ens : out.reports) {
    if (ens.method != ModerationPaths::ensemble || !ens.metrics.recall) continue;
    for (const auto& comp : out.reports) {
      if (comp.method == ModerationPaths::ensemble || !comp.metrics.recall) continue;
      // Dominance only holds between runs sharing the same threshold and dictionary.
      if (*ens.metrics.recall < *comp.metrics.recall) {
        out.recall_dominance = false;
        out.warnings.push_back("ensemble '" + ens.name + "' recall below component '" + comp.name + "'");
      }
    }
  }
  std::stable_sort(out.reports.begin(), out.reports.end(), [](const EvalReport& a, const EvalReport& b) {
    const auto& x = a.metrics.accuracy;
    const auto& y = b.metrics.accuracy;
    if (x && y) return *x > *y;
    return x.has_value() && !y.has_value();
  });
  return out;
}

nlohmann::json to_json(const Metrics& m) {
  return {{"accuracy", opt(m.accuracy)},
          {"precision", opt(m.precision)},
          {"recall", opt(m.recall)},
          {"f1_nudity", opt(m.f1_nudity)},
          {"precision_neutral", opt(m.precision_neutral)},
          {"recall_neutral", opt(m.recall_neutral)},
          {"f1_neutral", opt(m.f1_neutral)},
          {"f1_macro", opt(m.f1_macro)},
          {"f1_weighted", opt(m.f1_weighted)}};
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"name", r.name},
          {"method", to_string(r.method)},
          {"corpus_size", r.corpus_size},
          {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}},
          {"metrics", to_json(r.metrics)},
          {"errors", r.errors},
          {"skipped", r.skipped},
          {"config_fingerprint", r.config_fingerprint},
          {"warnings", r.warnings}};
}

nlohmann::json to_json(const MethodComparison& c) {
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& r : c.reports) reports.push_back(to_json(r));
  return {{"reports", reports}, {"recall_dominance", c.recall_dominance}, {"warnings", c.warnings}};
}

}  // namespace stylegate
