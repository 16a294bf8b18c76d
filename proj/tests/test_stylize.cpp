#include <mutex>

#include "doctest.h"
#include "stylegate/error.hpp"
#include "stylegate/mock_backends.hpp"
#include "stylegate/stylize.hpp"
#include "support.hpp"

using namespace stylegate;

namespace {

class SpyDiffusion : public DiffusionBackend {
 public:
  explicit SpyDiffusion(std::shared_ptr<DiffusionBackend> inner) : inner_(std::move(inner)) {}
  PortraitImage img2img(const DiffusionRequest& r) override {
    {
      std::lock_guard lock(mu);
      strengths.push_back(r.denoising_strength);
      kinds.push_back(r.condition ? r.condition->kind : ConditionKind::edge);
    }
    return inner_->img2img(r);
  }
  std::mutex mu;
  std::vector<double> strengths;
  std::vector<ConditionKind> kinds;

 private:
  std::shared_ptr<DiffusionBackend> inner_;
};

class ShrinkingDiffusion : public DiffusionBackend {
 public:
  PortraitImage img2img(const DiffusionRequest& r) override {
    return PortraitImage(r.image.width() - 1, r.image.height(), Rgb{1, 2, 3});
  }
};

PortraitImage input() { return testsupport::portrait_fixture(40, 48, {205, 160, 130}, 30); }

}  // namespace

TEST_CASE("default strengths") {
  PipelineConfig cfg;
  CHECK(cfg.edge_strength == 0.4);
  CHECK(cfg.depth_strength == 0.5);
  CHECK(cfg.baseline_strength == 0.9);
  const auto st = cfg.progressive_stages();
  CHECK(st[0].condition_kind == ConditionKind::edge);
  CHECK(st[1].condition_kind == ConditionKind::depth);
  CHECK(st[1].seed == st[0].seed + 1);
  CHECK(cfg.baseline_stage().condition_kind == ConditionKind::depth);
}

TEST_CASE("progressive run issues the four calls in order and chains stages") {
  auto log = std::make_shared<CallLog>();
  auto base = make_mock_backends({});
  auto spy = std::make_shared<SpyDiffusion>(base.diffusion);
  base.diffusion = spy;
  const auto set = record_calls(base, log);
  const auto x = input();
  const auto [xt, xb] = run_progressive(x, PipelineConfig{}, set);

  CHECK(log->ops() == std::vector<std::string>{"edge-condition", "i2i", "depth-condition", "i2i"});
  const auto calls = log->snapshot();
  CHECK(calls[0].input_digest == image_digest(x));
  CHECK(calls[1].output_digest == image_digest(xt));
  CHECK(calls[2].input_digest == image_digest(xt));
  CHECK(calls[3].input_digest == image_digest(xt));
  CHECK(calls[3].output_digest == image_digest(xb));
  CHECK(spy->strengths == std::vector<double>{0.4, 0.5});
  CHECK_FALSE(xt == x);
  CHECK_FALSE(xb == xt);
}

TEST_CASE("depth can be taken from the original") {
  auto log = std::make_shared<CallLog>();
  const auto set = record_calls(make_mock_backends({}), log);
  PipelineConfig cfg;
  cfg.depth_source = DepthSource::original;
  const auto x = input();
  run_progressive(x, cfg, set);
  CHECK(log->snapshot()[2].input_digest == image_digest(x));
}

TEST_CASE("baseline is one depth pass at 0.9") {
  auto base = make_mock_backends({});
  auto spy = std::make_shared<SpyDiffusion>(base.diffusion);
  base.diffusion = spy;
  auto log = std::make_shared<CallLog>();
  run_baseline(input(), 0.9, PipelineConfig{}, record_calls(base, log));
  CHECK(log->ops() == std::vector<std::string>{"depth-condition", "i2i"});
  CHECK(spy->strengths == std::vector<double>{0.9});
  CHECK(spy->kinds == std::vector<ConditionKind>{ConditionKind::depth});
}

TEST_CASE("identity mock returns the input at every stage") {
  MockProfileOptions o;
  o.diffusion = MockDiffusionBackend::Profile::identity;
  const auto x = input();
  const auto [xt, xb] = run_progressive(x, PipelineConfig{}, make_mock_backends(o));
  CHECK(xt == x);
  CHECK(xb == x);
}

TEST_CASE("a failed second stage resumes to a bit-identical result") {
  const auto x = input();
  const auto healthy = make_mock_backends({});
  const auto [ref_t, ref_b] = run_progressive(x, PipelineConfig{}, healthy);

  FaultSpec second;
  second.fail_calls = {1};
  auto job = make_progressive_job(x, PipelineConfig{});
  CHECK_THROWS_AS(run_job(job, inject_faults(healthy, BackendRole::diffusion, second)), BackendError);
  CHECK(job.state == JobState::failed);
  CHECK(job.stage_results.size() == 1);
  REQUIRE(job.failure);

  auto log = std::make_shared<CallLog>();
  run_job(job, record_calls(healthy, log));
  CHECK(job.state == JobState::done);
  CHECK(log->ops() == std::vector<std::string>{"depth-condition", "i2i"});
  CHECK(job.stage_results[0].output == ref_t);
  CHECK(job.stage_results[1].output == ref_b);
  CHECK(job.history == std::vector<JobState>{JobState::created, JobState::stage1_running, JobState::stage1_done,
                                             JobState::stage2_running, JobState::failed, JobState::stage2_running,
                                             JobState::done});
}

TEST_CASE("dimension mismatch fails the job") {
  auto set = make_mock_backends({});
  set.diffusion = std::make_shared<ShrinkingDiffusion>();
  auto job = make_progressive_job(input(), PipelineConfig{});
  try {
    run_job(job, set);
    FAIL("expected a dimension error");
  } catch (const BackendError& e) {
    CHECK(e.cause() == BackendFailure::dimension_mismatch);
  }
  CHECK(job.state == JobState::failed);
}

TEST_CASE("guarded stylize blocks flagged inputs before any pipeline call") {
  const auto dict = builtin_test_dictionary();
  auto log = std::make_shared<CallLog>();
  const auto set = record_calls(make_mock_backends({}), log);
  const auto flagged = testsupport::portrait_fixture(32, 32, {205, 160, 130}, 250);
  auto out = guarded_stylize(flagged, ModerationConfig{}, PipelineConfig{}, set, dict);
  REQUIRE(out.rejection);
  CHECK(*out.rejection == "nudity");
  CHECK_FALSE(out.job);
  CHECK(log->count(BackendRole::diffusion) == 0);
  CHECK(log->count(BackendRole::condition) == 0);

  log->clear();
  FaultSpec down;
  down.fail_all = true;
  out = guarded_stylize(input(), ModerationConfig{}, PipelineConfig{},
                        inject_faults(set, BackendRole::score, down), dict);
  REQUIRE(out.rejection);
  CHECK(*out.rejection == "backend_unavailable");
  CHECK(log->count(BackendRole::diffusion) == 0);

  log->clear();
  bool verdict_seen_first = false;
  GuardHooks hooks;
  hooks.job_id = "j1";
  hooks.on_verdict = [&](const ModerationVerdict&) { verdict_seen_first = log->count(BackendRole::diffusion) == 0; };
  out = guarded_stylize(input(), ModerationConfig{}, PipelineConfig{}, set, dict, false, hooks);
  CHECK_FALSE(out.rejection);
  REQUIRE(out.job);
  CHECK(out.job->job_id == "j1");
  CHECK(out.job->finished());
  CHECK(verdict_seen_first);
}

TEST_CASE("ledger records configs and digests") {
  auto job = make_progressive_job(input(), PipelineConfig{}, "id-1");
  run_job(job, make_mock_backends({}));
  const auto j = job_ledger(job);
  CHECK(j["stages"][0]["denoising_strength"] == 0.4);
  CHECK(j["stages"][1]["denoising_strength"] == 0.5);
  CHECK(j["stages"][1]["output_digest"] == image_digest(job.stage_results[1].output));
  CHECK(j["state"] == "done");
}

TEST_CASE("strength validation") {
  PipelineConfig cfg;
  cfg.edge_strength = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
}
