#include "stylegate/augmentation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <random>
#include <thread>

#include "stylegate/error.hpp"
#include "stylegate/util.hpp"

namespace stylegate {

namespace fs = std::filesystem;

std::string_view to_string(JobKind kind) { return kind == JobKind::t2i ? "t2i" : "i2i"; }

std::string_view to_string(JobStatus status) {
  switch (status) {
    case JobStatus::planned: return "planned";
    case JobStatus::submitted: return "submitted";
    case JobStatus::accepted: return "accepted";
    case JobStatus::rejected: return "rejected";
  }
  return "planned";
}

JobKind job_kind_from_string(std::string_view name) {
  if (name == "t2i") return JobKind::t2i;
  if (name == "i2i") return JobKind::i2i;
  throw Error(Errc::invalid_manifest, "unknown job kind '" + std::string(name) + "'");
}

JobStatus job_status_from_string(std::string_view name) {
  for (auto s : {JobStatus::planned, JobStatus::submitted, JobStatus::accepted, JobStatus::rejected}) {
    if (to_string(s) == name) return s;
  }
  throw Error(Errc::invalid_manifest, "unknown job status '" + std::string(name) + "'");
}

CharacterDataset load_dataset_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::io_error, "'" + dir.string() + "' is not a directory");
  CharacterDataset ds;
  ds.id = fs::absolute(dir).lexically_normal().filename().string();
  if (ds.id.empty()) ds.id = fs::absolute(dir).parent_path().filename().string();

  const fs::path meta = dir / "dataset.json";
  if (fs::exists(meta)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(meta));
      if (j.contains("id")) ds.id = j.at("id").get<std::string>();
      ds.style_prompt = parse_prompt(j.value("style_prompt", std::string("portrait")));
      for (const auto& e : j.at("images")) {
        DatasetImage img{(dir / e.at("image").get<std::string>()).string(), std::nullopt};
        if (e.contains("mask") && !e.at("mask").is_null()) img.mask_path = (dir / e.at("mask").get<std::string>()).string();
        ds.images.push_back(std::move(img));
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::invalid_manifest, meta.string() + ": " + e.what());
    }
    return ds;
  }

  ds.style_prompt = parse_prompt("portrait");
  std::vector<fs::path> pngs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto& p = entry.path();
    if (!entry.is_regular_file() || p.extension() != ".png") continue;
    const std::string stem = p.stem().string();
    if (stem.size() >= 5 && stem.compare(stem.size() - 5, 5, "_mask") == 0) continue;
    pngs.push_back(p);
  }
  std::sort(pngs.begin(), pngs.end());
  for (const auto& p : pngs) {
    DatasetImage img{p.string(), std::nullopt};
    const fs::path mask = p.parent_path() / (p.stem().string() + "_mask.png");
    if (fs::exists(mask)) img.mask_path = mask.string();
    ds.images.push_back(std::move(img));
  }
  return ds;
}

AugmentationPlan plan_augmentation(const CharacterDataset& ds, const TagWeights& tag_weights, int target,
                                   std::uint64_t plan_seed, double i2i_ratio) {
  if (ds.images.empty()) throw Error(Errc::empty_dataset, "dataset '" + ds.id + "' has no images");
  if (target < kMinAugmentTarget || target > kMaxAugmentTarget) {
    throw Error(Errc::invalid_target, "target " + std::to_string(target) + " outside [" +
                                          std::to_string(kMinAugmentTarget) + ", " +
                                          std::to_string(kMaxAugmentTarget) + "]");
  }
  if (static_cast<std::size_t>(target) < ds.images.size()) {
    throw Error(Errc::target_below_original_count, "target " + std::to_string(target) + " is below the " +
                                                       std::to_string(ds.images.size()) + " original images");
  }
  if (!(i2i_ratio >= 0.0 && i2i_ratio <= 1.0)) throw Error(Errc::invalid_config, "i2i ratio must lie in [0, 1]");

  AugmentationPlan plan;
  plan.dataset_id = ds.id;
  plan.original_count = ds.images.size();
  plan.target_total = target;
  plan.plan_seed = plan_seed;
  plan.i2i_ratio = i2i_ratio;
  if (ds.images.size() > kMaxOriginalImages) {
    plan.warnings.push_back("dataset has " + std::to_string(ds.images.size()) + " originals, more than " +
                            std::to_string(kMaxOriginalImages));
  }

  const std::size_t n_jobs = static_cast<std::size_t>(target) - ds.images.size();
  const auto tags = canonical_skin_tone_tags();
  if (n_jobs < tags.size()) {
    plan.warnings.push_back("TagCoverageImpossible: " + std::to_string(n_jobs) +
                            " jobs cannot cover all 7 skin-tone tags; originals must already cover the rest");
  }

  std::mt19937_64 rng(plan_seed);
  std::vector<std::size_t> sources(ds.images.size());
  for (std::size_t i = 0; i < sources.size(); ++i) sources[i] = i;
  for (std::size_t i = sources.size(); i > 1; --i) std::swap(sources[i - 1], sources[rng() % i]);

  std::size_t i2i_count = 0;
  for (std::size_t i = 0; i < n_jobs; ++i) {
    AugmentationJob job;
    job.index = i;
    job.tag = tags[i % tags.size()];
    const auto w = tag_weights.find(job.tag.name);
    const double weight = w == tag_weights.end() ? kDefaultTagWeight : w->second;
    if (!(weight > 0.0)) throw Error(Errc::malformed_weight, "tag weight for '" + job.tag.name + "' must be positive");
    job.prompt.segments.push_back({job.tag.text(), weight});
    job.prompt.segments.insert(job.prompt.segments.end(), ds.style_prompt.segments.begin(),
                               ds.style_prompt.segments.end());
    const bool i2i = std::floor(double(i + 1) * i2i_ratio) - std::floor(double(i) * i2i_ratio) >= 1.0;
    if (i2i) {
      job.kind = JobKind::i2i;
      job.source_image = ds.images[sources[i2i_count % sources.size()]].path;
      ++i2i_count;
    }
    job.seed = rng();
    plan.jobs.push_back(std::move(job));
  }
  return plan;
}

std::vector<std::string> check_plan(const AugmentationPlan& plan) {
  std::vector<std::string> issues;
  if (plan.original_count + plan.jobs.size() != static_cast<std::size_t>(plan.target_total)) {
    issues.push_back("originals + jobs != target");
  }
  std::map<std::string, std::size_t> per_tag;
  for (auto name : kSkinToneTagNames) per_tag[std::string(name)] = 0;
  for (const auto& job : plan.jobs) {
    if (!is_canonical_tag(job.tag.name)) issues.push_back("job " + std::to_string(job.index) + " has unknown tag");
    per_tag[job.tag.name]++;
    if ((job.kind == JobKind::i2i) != job.source_image.has_value()) {
      issues.push_back("job " + std::to_string(job.index) + ": source image must be present iff i2i");
    }
    std::size_t tag_segments = 0;
    for (const auto& seg : job.prompt.segments) {
      for (auto name : kSkinToneTagNames) {
        if (seg.text == std::string(name) + " skin") ++tag_segments;
      }
    }
    if (tag_segments != 1) issues.push_back("job " + std::to_string(job.index) + " must carry exactly one tag segment");
  }
  if (plan.jobs.size() >= kSkinToneTagNames.size()) {
    const auto [lo, hi] = std::minmax_element(per_tag.begin(), per_tag.end(),
                                              [](const auto& a, const auto& b) { return a.second < b.second; });
    if (lo->second == 0) issues.push_back("tag '" + lo->first + "' is not covered");
    if (hi->second - lo->second > 1) issues.push_back("per-tag job counts differ by more than 1");
  }
  return issues;
}

nlohmann::json to_json(const AugmentationPlan& plan) {
  nlohmann::json jobs = nlohmann::json::array();
  for (const auto& job : plan.jobs) {
    nlohmann::json j = {
        {"index", job.index},
        {"kind", to_string(job.kind)},
        {"tag", job.tag.name},
        {"prompt", serialize_prompt(job.prompt)},
        {"source_image", job.source_image ? nlohmann::json(*job.source_image) : nlohmann::json(nullptr)},
        {"seed", job.seed},
        {"status", to_string(job.status)},
    };
    if (job.result_image) j["result_image"] = *job.result_image;
    if (job.error) j["error"] = *job.error;
    jobs.push_back(std::move(j));
  }
  return {{"dataset_id", plan.dataset_id}, {"original_count", plan.original_count},
          {"target_total", plan.target_total}, {"plan_seed", plan.plan_seed},
          {"i2i_ratio", plan.i2i_ratio},     {"jobs", std::move(jobs)},
          {"warnings", plan.warnings}};
}

AugmentationPlan plan_from_json(const nlohmann::json& j) {
  try {
    AugmentationPlan plan;
    plan.dataset_id = j.at("dataset_id").get<std::string>();
    plan.original_count = j.at("original_count").get<std::size_t>();
    plan.target_total = j.at("target_total").get<int>();
    plan.plan_seed = j.at("plan_seed").get<std::uint64_t>();
    plan.i2i_ratio = j.value("i2i_ratio", 0.5);
    plan.warnings = j.value("warnings", std::vector<std::string>{});
    for (const auto& e : j.at("jobs")) {
      AugmentationJob job;
      job.index = e.at("index").get<std::size_t>();
      job.kind = job_kind_from_string(e.at("kind").get<std::string>());
      job.tag = SkinToneTag{e.at("tag").get<std::string>()};
      job.prompt = parse_prompt(e.at("prompt").get<std::string>());
      if (!e.at("source_image").is_null()) job.source_image = e.at("source_image").get<std::string>();
      job.seed = e.at("seed").get<std::uint64_t>();
      job.status = job_status_from_string(e.at("status").get<std::string>());
      if (e.contains("result_image")) job.result_image = e.at("result_image").get<std::string>();
      if (e.contains("error")) job.error = e.at("error").get<std::string>();
      plan.jobs.push_back(std::move(job));
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_manifest, std::string("plan json: ") + e.what());
  }
}

void submit_plan(AugmentationPlan& plan, const BackendSet& backends, const fs::path& out_dir,
                 const SubmitOptions& opts) {
  if (!backends.diffusion) throw Error(Errc::invalid_config, "no diffusion backend configured");
  fs::create_directories(out_dir);
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < plan.jobs.size(); ++i) {
    if (plan.jobs[i].status == JobStatus::planned) pending.push_back(i);
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < pending.size(); k = next++) {
      AugmentationJob& job = plan.jobs[pending[k]];
      try {
        DiffusionRequest req;
        req.prompt = job.prompt;
        req.seed = job.seed;
        if (job.kind == JobKind::i2i) {
          req.image = load_png_rgb(*job.source_image);
          if (!backends.condition) throw Error(Errc::invalid_config, "no condition backend configured");
          req.condition = backends.condition->extract(req.image, ConditionKind::edge);
          req.denoising_strength = opts.i2i_strength;
        } else {
          req.image = PortraitImage(opts.canvas_width, opts.canvas_height, {128, 128, 128});
          req.denoising_strength = 1.0;
        }
        const PortraitImage out = backends.diffusion->img2img(req);
        char name[64];
        std::snprintf(name, sizeof name, "%03zu_", job.index);
        std::string slug = job.tag.name;
        std::replace(slug.begin(), slug.end(), ' ', '_');
        const fs::path result = out_dir / (plan.dataset_id + "_" + name + slug + ".png");
        write_file(result, encode_png(out));
        job.result_image = result.string();
        job.status = JobStatus::submitted;
        job.error.reset();
      } catch (const std::exception& e) {
        job.error = e.what();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(opts.max_in_flight, pending.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

void review_job(AugmentationPlan& plan, std::size_t index, JobStatus decision) {
  if (decision != JobStatus::accepted && decision != JobStatus::rejected) {
    throw Error(Errc::invalid_state, "review decision must be accepted or rejected");
  }
  auto it = std::find_if(plan.jobs.begin(), plan.jobs.end(), [&](const auto& j) { return j.index == index; });
  if (it == plan.jobs.end()) throw Error(Errc::invalid_state, "no job with index " + std::to_string(index));
  if (it->status != JobStatus::submitted) {
    throw Error(Errc::invalid_state, "job " + std::to_string(index) + " is " + std::string(to_string(it->status)) +
                                         ", only submitted jobs can be reviewed");
  }
  it->status = decision;
}

AugmentationValidation validate_augmented(const SkinToneDistribution& original, const SkinToneDistribution& augmented,
                                          double min_coverage_gain) {
  AugmentationValidation v;
  v.coverage_original = original.coverage;
  v.coverage_augmented = augmented.coverage;
  v.coverage_gain = augmented.coverage - original.coverage;
  v.emd_original_to_uniform = emd_to_uniform(original);
  v.emd_augmented_to_uniform = emd_to_uniform(augmented);
  v.passed = v.coverage_gain >= min_coverage_gain && v.emd_augmented_to_uniform < v.emd_original_to_uniform;
  return v;
}

nlohmann::json to_json(const AugmentationValidation& v) {
  return {{"passed", v.passed},
          {"coverage_original", v.coverage_original},
          {"coverage_augmented", v.coverage_augmented},
          {"coverage_gain", v.coverage_gain},
          {"emd_original_to_uniform", v.emd_original_to_uniform},
          {"emd_augmented_to_uniform", v.emd_augmented_to_uniform}};
}

}  // namespace stylegate
