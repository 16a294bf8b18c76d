#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "stylegate/augmentation.hpp"
#include "stylegate/config.hpp"
#include "stylegate/error.hpp"
#include "stylegate/eval.hpp"
#include "stylegate/gateway.hpp"
#include "stylegate/http_backend.hpp"
#include "stylegate/keyword_filter.hpp"
#include "stylegate/mock_backends.hpp"
#include "stylegate/moderation.hpp"
#include "stylegate/prompt_weight.hpp"
#include "stylegate/skintone.hpp"
#include "stylegate/stylize.hpp"
#include "stylegate/util.hpp"

using nlohmann::json;
using namespace stylegate;

namespace {

ServiceConfig config_or_default(const std::string& path) {
  if (path.empty()) {
    ServiceConfig cfg = config_from_json(apply_env_overrides(json::object(), stylegate_environment()));
    return cfg;
  }
  return load_config(path);
}

BackendSet backends_for(const ServiceConfig& cfg, const std::string& profile_override) {
  const Profile p = profile_override.empty() ? cfg.default_profile : profile_from_string(profile_override);
  BackendSet set = p == Profile::mock ? make_mock_backends(cfg.mock) : make_http_backends(cfg.live_backends);
  return limit_concurrency(set, cfg.concurrency_per_role);
}

KeywordDictionary dictionary_for(const ServiceConfig& cfg, const std::string& override_path) {
  if (!override_path.empty()) return load_dictionary(override_path);
  if (cfg.dictionary_path) return load_dictionary(*cfg.dictionary_path);
  return builtin_test_dictionary();
}

void emit(const json& doc, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << doc.dump(2) << "\n";
  } else {
    write_text_file(out, doc.dump(2) + "\n");
  }
}

std::vector<MaskedImage> load_masked_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot read " + path.string());
  const auto base = path.parent_path();
  std::vector<MaskedImage> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = json::parse(line);
    auto resolve = [&](const std::string& p) { return std::filesystem::path(p).is_absolute() ? p : (base / p).string(); };
    out.push_back(MaskedImage{load_png_rgb(resolve(j.at("image"))), load_png_mask(resolve(j.at("mask")))});
  }
  return out;
}

std::function<void(int)> g_stop;
void on_signal(int sig) {
  if (g_stop) g_stop(sig);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Portrait content moderation and stylization gateway"};
  app.require_subcommand(1);

  // moderate
  auto* mod = app.add_subcommand("moderate", "Moderate one image");
  std::string mod_image, mod_keywords, mod_config, mod_profile;
  std::optional<double> mod_threshold;
  bool mod_json = false;
  mod->add_option("--image", mod_image, "PNG image")->required()->check(CLI::ExistingFile);
  mod->add_option("--threshold", mod_threshold, "score threshold")->check(CLI::Range(0.0, 1.0));
  mod->add_option("--keywords", mod_keywords, "keyword dictionary file")->check(CLI::ExistingFile);
  mod->add_option("--config", mod_config, "service config (TOML or JSON)");
  mod->add_option("--profile", mod_profile, "mock or live");
  mod->add_flag("--json", mod_json, "print the verdict as JSON");

  // analyze-skin-tone
  auto* ana = app.add_subcommand("analyze-skin-tone", "Skin-tone KDE over a masked image set");
  std::string ana_manifest, ana_compare, ana_out;
  std::optional<double> ana_bandwidth, ana_min_gain;
  ana->add_option("--manifest", ana_manifest, "JSONL of {image, mask}")->required()->check(CLI::ExistingFile);
  ana->add_option("--compare", ana_compare, "second manifest (augmented set)")->check(CLI::ExistingFile);
  ana->add_option("--bandwidth", ana_bandwidth, "fixed KDE bandwidth");
  ana->add_option("--min-gain", ana_min_gain, "coverage gain required by --compare validation");
  ana->add_option("--out", ana_out, "output JSON path");

  // plan-augment
  auto* plan = app.add_subcommand("plan-augment", "Plan skin-tone spectrum augmentation jobs");
  std::string plan_dataset, plan_out;
  int plan_target = 45;
  std::uint64_t plan_seed = 0;
  double plan_ratio = 0.5;
  std::vector<std::string> plan_weights;
  plan->add_option("--dataset", plan_dataset, "dataset directory")->required()->check(CLI::ExistingDirectory);
  plan->add_option("--target", plan_target, "target dataset size (40..50)");
  plan->add_option("--seed", plan_seed, "plan seed");
  plan->add_option("--i2i-ratio", plan_ratio, "fraction of i2i jobs")->check(CLI::Range(0.0, 1.0));
  plan->add_option("--tag-weight", plan_weights, "tag=weight, repeatable");
  plan->add_option("--out", plan_out, "plan JSON path");

  // submit-plan
  auto* sub = app.add_subcommand("submit-plan", "Run planned jobs through the diffusion backend");
  std::string sub_plan, sub_dir, sub_config, sub_profile, sub_out;
  std::size_t sub_inflight = 4;
  sub->add_option("--plan", sub_plan, "plan JSON")->required()->check(CLI::ExistingFile);
  sub->add_option("--out-dir", sub_dir, "directory for generated images")->required();
  sub->add_option("--config", sub_config, "service config");
  sub->add_option("--profile", sub_profile, "mock or live");
  sub->add_option("--max-in-flight", sub_inflight, "concurrent backend calls");
  sub->add_option("--out", sub_out, "updated plan path (default: overwrite --plan)");

  // review-plan
  auto* rev = app.add_subcommand("review-plan", "Accept or reject submitted jobs");
  std::string rev_plan;
  std::vector<std::size_t> rev_accept, rev_reject;
  rev->add_option("--plan", rev_plan, "plan JSON")->required()->check(CLI::ExistingFile);
  rev->add_option("--accept", rev_accept, "job indices to accept");
  rev->add_option("--reject", rev_reject, "job indices to reject");

  // stylize
  auto* sty = app.add_subcommand("stylize", "Moderate, then run the two-stage pipeline");
  std::string sty_image, sty_config, sty_out, sty_profile;
  bool sty_baseline = false;
  std::optional<std::uint64_t> sty_seed;
  sty->add_option("--image", sty_image, "PNG image")->required()->check(CLI::ExistingFile);
  sty->add_option("--config", sty_config, "service config");
  sty->add_option("--out", sty_out, "output directory")->required();
  sty->add_option("--seed", sty_seed, "pipeline seed");
  sty->add_option("--profile", sty_profile, "mock or live");
  sty->add_flag("--baseline", sty_baseline, "single depth pass at the baseline strength");

  // eval
  auto* ev = app.add_subcommand("eval", "Metric suite over a labeled manifest");
  std::string ev_manifest, ev_method = "all", ev_keywords, ev_config, ev_out, ev_profile;
  std::optional<double> ev_threshold;
  bool ev_online = false, ev_skip = false;
  ev->add_option("--manifest", ev_manifest, "JSONL of {image, label, caption?, score?}")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--method", ev_method, "score_only, keyword_only, ensemble or all");
  ev->add_option("--threshold", ev_threshold, "score threshold")->check(CLI::Range(0.0, 1.0));
  ev->add_option("--keywords", ev_keywords, "keyword dictionary file")->check(CLI::ExistingFile);
  ev->add_option("--config", ev_config, "service config");
  ev->add_option("--profile", ev_profile, "mock or live (online mode)");
  ev->add_flag("--online", ev_online, "call backends instead of using manifest scores/captions");
  ev->add_flag("--skip-errors", ev_skip, "exclude indeterminate verdicts from the matrix");
  ev->add_option("--out", ev_out, "report JSON path");

  // serve
  auto* srv = app.add_subcommand("serve", "Run the HTTP gateway");
  std::string srv_config;
  srv->add_option("--config", srv_config, "service config (TOML or JSON)");

  // mock-backend
  auto* mb = app.add_subcommand("mock-backend", "Serve the deterministic mock backends over the wire protocol");
  std::string mb_host = "127.0.0.1", mb_config, mb_token_env;
  int mb_port = 9090;
  mb->add_option("--host", mb_host, "bind address");
  mb->add_option("--port", mb_port, "bind port");
  mb->add_option("--config", mb_config, "service config (mock section is used)");
  mb->add_option("--token-env", mb_token_env, "env var holding the required bearer token");

  // prompt
  auto* pr = app.add_subcommand("prompt", "Parse a weighted prompt or expand skin-tone tags");
  std::string pr_text;
  bool pr_tags = false;
  double pr_weight = kDefaultTagWeight;
  pr->add_option("text", pr_text, "prompt text")->required();
  pr->add_flag("--skin-tones", pr_tags, "emit one prompt per canonical skin-tone tag");
  pr->add_option("--tag-weight", pr_weight, "weight for --skin-tones");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*mod) {
      ServiceConfig cfg = config_or_default(mod_config);
      if (mod_threshold) cfg.moderation.score_threshold = *mod_threshold;
      const auto dict = dictionary_for(cfg, mod_keywords);
      cfg.moderation.dictionary_version = dict.version();
      const auto backends = backends_for(cfg, mod_profile);
      const auto verdict =
          moderate(load_png_rgb(mod_image), cfg.moderation, backends.score, backends.caption, dict);
      if (mod_json) {
        std::cout << to_json(verdict).dump(2) << "\n";
      } else {
        std::cout << to_string(verdict.label) << (verdict.indeterminate ? " (indeterminate)" : "")
                  << " score_flag=" << verdict.score_path_flag << " keyword_flag=" << verdict.keyword_path_flag
                  << "\n";
      }
      return verdict.indeterminate ? 3 : 0;
    }

    if (*ana) {
      AnalysisOptions opts;
      opts.bandwidth = ana_bandwidth;
      opts.source_tag = SourceTag::original;
      const auto first = analyze_dataset(load_masked_manifest(ana_manifest), opts);
      json doc = {{"distribution", to_json(first)}, {"emd_to_uniform", emd_to_uniform(first)}};
      if (!ana_compare.empty()) {
        opts.source_tag = SourceTag::augmented;
        const auto second = analyze_dataset(load_masked_manifest(ana_compare), opts);
        doc["compared"] = {{"distribution", to_json(second)}, {"emd_to_uniform", emd_to_uniform(second)}};
        doc["divergence"] = to_json(compare_distributions(first, second));
        doc["validation"] = to_json(validate_augmented(first, second, ana_min_gain.value_or(0.0)));
      }
      emit(doc, ana_out);
      return 0;
    }

    if (*plan) {
      TagWeights weights;
      for (const auto& tw : plan_weights) {
        const auto eq = tw.rfind('=');
        if (eq == std::string::npos) throw Error(Errc::invalid_config, "--tag-weight expects tag=weight");
        weights[tw.substr(0, eq)] = std::stod(tw.substr(eq + 1));
      }
      const auto p = plan_augmentation(load_dataset_dir(plan_dataset), weights, plan_target, plan_seed, plan_ratio);
      for (const auto& w : p.warnings) std::cerr << "warning: " << w << "\n";
      emit(to_json(p), plan_out);
      return 0;
    }

    if (*sub) {
      const ServiceConfig cfg = config_or_default(sub_config);
      auto p = plan_from_json(json::parse(read_text_file(sub_plan)));
      SubmitOptions opts;
      opts.max_in_flight = sub_inflight;
      submit_plan(p, backends_for(cfg, sub_profile), sub_dir, opts);
      write_text_file(sub_out.empty() ? sub_plan : sub_out, to_json(p).dump(2) + "\n");
      std::size_t failed = 0;
      for (const auto& j : p.jobs) failed += j.error.has_value();
      if (failed) std::cerr << failed << " job(s) failed; re-run submit-plan to retry\n";
      return failed ? 4 : 0;
    }

    if (*rev) {
      auto p = plan_from_json(json::parse(read_text_file(rev_plan)));
      for (auto i : rev_accept) review_job(p, i, JobStatus::accepted);
      for (auto i : rev_reject) review_job(p, i, JobStatus::rejected);
      write_text_file(rev_plan, to_json(p).dump(2) + "\n");
      return 0;
    }

    if (*sty) {
      ServiceConfig cfg = config_or_default(sty_config);
      if (sty_seed) cfg.pipeline.seed = *sty_seed;
      const auto dict = dictionary_for(cfg, "");
      cfg.moderation.dictionary_version = dict.version();
      const auto backends = backends_for(cfg, sty_profile);
      const auto image = load_png_rgb(sty_image);
      GuardHooks hooks;
      hooks.job_id = derive_uuid("stylize|" + config_fingerprint(cfg) + "|" + image_digest(image));
      const auto out = guarded_stylize(image, cfg.moderation, cfg.pipeline, backends, dict, sty_baseline, hooks);
      const std::filesystem::path dir(sty_out);
      json ledger = {{"verdict", to_json(out.verdict)}, {"config_fingerprint", config_fingerprint(cfg)}};
      if (out.rejection) {
        ledger["state"] = "rejected";
        ledger["rejection"] = *out.rejection;
        write_text_file(dir / "job.json", ledger.dump(2) + "\n");
        std::cerr << "rejected: " << *out.rejection << "\n";
        return 5;
      }
      const auto& job = *out.job;
      ledger["job"] = job_ledger(job);
      ledger["state"] = to_string(job.state);
      if (job.progressive() && !job.stage_results.empty()) {
        write_file(dir / "intermediate.png", encode_png(job.stage_results.front().output));
      }
      if (job.finished()) write_file(dir / "output.png", encode_png(job.stage_results.back().output));
      write_text_file(dir / "job.json", ledger.dump(2) + "\n");
      return job.finished() ? 0 : 4;
    }

    if (*ev) {
      ServiceConfig cfg = config_or_default(ev_config);
      if (ev_threshold) cfg.moderation.score_threshold = *ev_threshold;
      const auto dict = dictionary_for(cfg, ev_keywords);
      cfg.moderation.dictionary_version = dict.version();
      const auto manifest = load_manifest(ev_manifest);
      EvalOptions opts{!ev_online, ev_skip};
      std::optional<BackendSet> backends;
      if (ev_online) backends = backends_for(cfg, ev_profile);
      const BackendSet* bp = backends ? &*backends : nullptr;
      if (ev_method == "all") {
        std::vector<MethodSpec> specs;
        for (auto m : {ModerationPaths::score_only, ModerationPaths::keyword_only, ModerationPaths::ensemble}) {
          specs.push_back(MethodSpec{std::string(to_string(m)), m, cfg.moderation});
        }
        const auto cmp = compare_methods(manifest, specs, dict, bp, opts);
        for (const auto& w : cmp.warnings) std::cerr << "warning: " << w << "\n";
        emit(to_json(cmp), ev_out);
      } else {
        emit(to_json(evaluate(manifest, moderation_paths_from_string(ev_method), cfg.moderation, dict, bp, opts)),
             ev_out);
      }
      return 0;
    }

    if (*srv) {
      Gateway gw(config_or_default(srv_config));
      g_stop = [&gw](int) { gw.stop(); };
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << gw.config().listen << " (fingerprint " << gw.fingerprint() << ")\n";
      return gw.run() ? 0 : 1;
    }

    if (*mb) {
      const ServiceConfig cfg = config_or_default(mb_config);
      std::optional<std::string> token;
      if (!mb_token_env.empty()) {
        if (const char* t = std::getenv(mb_token_env.c_str()); t && *t) token = t;
      }
      BackendProtocolServer server(make_mock_backends(cfg.mock), token);
      g_stop = [&server](int) { server.stop(); };
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "mock backends on " << mb_host << ":" << mb_port << "\n";
      return server.listen(mb_host, mb_port) ? 0 : 1;
    }

    if (*pr) {
      const auto parsed = parse_prompt(pr_text);
      if (pr_tags) {
        json arr = json::array();
        for (const auto& [tag, prompt] : skin_tone_prompt_set(parsed, pr_weight)) {
          arr.push_back({{"tag", tag.name}, {"prompt", serialize_prompt(prompt)}});
        }
        std::cout << arr.dump(2) << "\n";
      } else {
        json segs = json::array();
        for (const auto& s : parsed.segments) segs.push_back({{"text", s.text}, {"weight", s.weight}});
        std::cout << json{{"segments", segs}, {"serialized", serialize_prompt(parsed)}}.dump(2) << "\n";
      }
      return 0;
    }
  } catch (const PromptParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
