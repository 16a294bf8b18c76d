#include "stylegate/stylize.hpp"

#include <algorithm>

#include "stylegate/error.hpp"

namespace stylegate {

std::string_view to_string(DepthSource s) { return s == DepthSource::intermediate ? "intermediate" : "original"; }

DepthSource depth_source_from_string(std::string_view name) {
  if (name == "intermediate") return DepthSource::intermediate;
  if (name == "original") return DepthSource::original;
  throw Error(Errc::invalid_config, "depth_source must be 'intermediate' or 'original'");
}

std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::created: return "created";
    case JobState::stage1_running: return "stage1_running";
    case JobState::stage1_done: return "stage1_done";
    case JobState::stage2_running: return "stage2_running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "created";
}

std::array<StageConfig, 2> PipelineConfig::progressive_stages() const {
  return {StageConfig{ConditionKind::edge, edge_strength, style_prompt, seed},
          StageConfig{ConditionKind::depth, depth_strength, style_prompt, seed + 1}};
}

StageConfig PipelineConfig::baseline_stage() const {
  return StageConfig{ConditionKind::depth, baseline_strength, style_prompt, seed};
}

void PipelineConfig::validate() const {
  for (double s : {edge_strength, depth_strength, baseline_strength}) {
    if (!(s >= 0.0 && s <= 1.0)) throw Error(Errc::invalid_config, "denoising strengths must lie in [0, 1]");
  }
}

PipelineJob make_progressive_job(const PortraitImage& input, const PipelineConfig& cfg, std::string job_id) {
  cfg.validate();
  PipelineJob job;
  job.job_id = std::move(job_id);
  job.input = input;
  const auto stages = cfg.progressive_stages();
  job.stages.assign(stages.begin(), stages.end());
  job.depth_source = cfg.depth_source;
  return job;
}

PipelineJob make_baseline_job(const PortraitImage& input, const PipelineConfig& cfg, std::string job_id) {
  cfg.validate();
  PipelineJob job;
  job.job_id = std::move(job_id);
  job.input = input;
  job.stages.push_back(cfg.baseline_stage());
  job.depth_source = DepthSource::original;
  return job;
}

namespace {

bool allowed(const PipelineJob& job, JobState from, JobState to) {
  switch (from) {
    case JobState::created: return to == JobState::stage1_running;
    case JobState::stage1_running: return to == JobState::stage1_done || to == JobState::failed;
    case JobState::stage1_done:
      return job.progressive() ? to == JobState::stage2_running : to == JobState::done;
    case JobState::stage2_running: return to == JobState::done || to == JobState::failed;
    case JobState::failed:
      return (job.stage_results.empty() && to == JobState::stage1_running) ||
             (job.stage_results.size() == 1 && job.progressive() && to == JobState::stage2_running);
    case JobState::done: return false;
  }
  return false;
}

void transition(PipelineJob& job, JobState to) {
  if (!allowed(job, job.state, to)) {
    throw Error(Errc::invalid_state, "illegal job transition " + std::string(to_string(job.state)) + " -> " +
                                         std::string(to_string(to)));
  }
  job.state = to;
  job.history.push_back(to);
}

void check_dims(const PortraitImage& ref, int w, int h, BackendRole role, const char* what) {
  if (w != ref.width() || h != ref.height()) {
    throw BackendError(role, BackendFailure::dimension_mismatch,
                       std::string(what) + " is " + std::to_string(w) + "x" + std::to_string(h) + ", expected " +
                           std::to_string(ref.width()) + "x" + std::to_string(ref.height()));
  }
}

StageResult run_stage(const PipelineJob& job, std::size_t k, const BackendSet& backends) {
  if (!backends.condition) throw BackendError(BackendRole::condition, BackendFailure::unavailable, "not configured");
  if (!backends.diffusion) throw BackendError(BackendRole::diffusion, BackendFailure::unavailable, "not configured");
  const StageConfig& stage = job.stages[k];
  const PortraitImage& stage_input = k == 0 ? job.input : job.stage_results[0].output;
  const PortraitImage& condition_source =
      (k == 1 && job.depth_source == DepthSource::original) ? job.input : stage_input;

  StageResult result;
  result.condition = backends.condition->extract(condition_source, stage.condition_kind);
  if (result.condition.kind != stage.condition_kind) {
    throw BackendError(BackendRole::condition, BackendFailure::malformed_response, "condition kind mismatch");
  }
  check_dims(stage_input, result.condition.width(), result.condition.height(), BackendRole::condition,
             "condition image");

  DiffusionRequest req{stage_input, result.condition, stage.prompt, stage.denoising_strength, stage.seed};
  result.output = backends.diffusion->img2img(req);
  check_dims(stage_input, result.output.width(), result.output.height(), BackendRole::diffusion, "output image");
  return result;
}

}  // namespace

void run_job(PipelineJob& job, const BackendSet& backends) {
  if (job.state == JobState::done) return;
  if (job.input.empty()) throw Error(Errc::dimension_mismatch, "job has no input image");
  while (job.stage_results.size() < job.stages.size()) {
    const std::size_t k = job.stage_results.size();
    transition(job, k == 0 ? JobState::stage1_running : JobState::stage2_running);
    try {
      job.stage_results.push_back(run_stage(job, k, backends));
    } catch (const std::exception& e) {
      job.failure = e.what();
      transition(job, JobState::failed);
      throw;
    }
    job.failure.reset();
    if (k == 0) transition(job, JobState::stage1_done);
  }
  transition(job, JobState::done);
}

std::pair<PortraitImage, PortraitImage> run_progressive(const PortraitImage& x, const PipelineConfig& cfg,
                                                        const BackendSet& backends) {
  PipelineJob job = make_progressive_job(x, cfg);
  run_job(job, backends);
  return {job.stage_results[0].output, job.stage_results[1].output};
}

PortraitImage run_baseline(const PortraitImage& x, double strength, const PipelineConfig& cfg,
                           const BackendSet& backends) {
  PipelineConfig c = cfg;
  c.baseline_strength = strength;
  PipelineJob job = make_baseline_job(x, c);
  run_job(job, backends);
  return job.stage_results[0].output;
}

GuardedResult guarded_stylize(const PortraitImage& x, const ModerationConfig& mcfg, const PipelineConfig& pcfg,
                              const BackendSet& backends, const KeywordDictionary& dict, bool baseline,
                              const GuardHooks& hooks) {
  pcfg.validate();
  GuardedResult out;
  out.verdict = moderate(x, mcfg, backends.score, backends.caption, dict);
  if (hooks.on_verdict) hooks.on_verdict(out.verdict);
  if (out.verdict.label == Label::nudity) {
    out.rejection = out.verdict.indeterminate ? "backend_unavailable" : "nudity";
    return out;
  }
  out.job = baseline ? make_baseline_job(x, pcfg, hooks.job_id) : make_progressive_job(x, pcfg, hooks.job_id);
  try {
    run_job(*out.job, backends);
  } catch (const BackendError&) {
    // job already carries state `failed` and the failure text
  }
  return out;
}

nlohmann::json job_ledger(const PipelineJob& job) {
  nlohmann::json stages = nlohmann::json::array();
  for (std::size_t k = 0; k < job.stages.size(); ++k) {
    const auto& s = job.stages[k];
    nlohmann::json j = {{"condition_kind", to_string(s.condition_kind)},
                        {"denoising_strength", s.denoising_strength},
                        {"prompt", serialize_prompt(s.prompt)},
                        {"seed", s.seed}};
    if (k < job.stage_results.size()) {
      j["condition_digest"] = plane_digest(job.stage_results[k].condition.pixels);
      j["output_digest"] = image_digest(job.stage_results[k].output);
    }
    stages.push_back(std::move(j));
  }
  nlohmann::json history = nlohmann::json::array();
  for (auto s : job.history) history.push_back(to_string(s));
  return {{"job_id", job.job_id},
          {"mode", job.progressive() ? "progressive" : "baseline"},
          {"input_digest", image_digest(job.input)},
          {"width", job.input.width()},
          {"height", job.input.height()},
          {"depth_source", to_string(job.depth_source)},
          {"stages", std::move(stages)},
          {"state", to_string(job.state)},
          {"history", std::move(history)},
          {"failure", job.failure ? nlohmann::json(*job.failure) : nlohmann::json(nullptr)}};
}

}  // namespace stylegate
