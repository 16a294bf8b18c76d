#include "stylegate/config.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "stylegate/error.hpp"
#include "stylegate/toml_subset.hpp"
#include "stylegate/util.hpp"

extern char** environ;

namespace stylegate {

using nlohmann::json;

std::string_view to_string(Profile p) { return p == Profile::mock ? "mock" : "live"; }

Profile profile_from_string(std::string_view name) {
  if (name == "mock") return Profile::mock;
  if (name == "live") return Profile::live;
  throw Error(Errc::invalid_config, "unknown profile '" + std::string(name) + "'");
}

PipelineConfig default_service_pipeline() {
  PipelineConfig p;
  p.style_prompt = parse_prompt("stylized portrait");
  return p;
}

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(Errc::invalid_config, what); }

void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) bad(where + " must be a table");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) bad("unknown key '" + where + key + "'");
  }
}

template <typename T>
T get_as(const json& obj, const std::string& key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    bad("wrong type for '" + where + key + "'");
  }
}

double get_number(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.at(key).is_number()) bad("'" + where + key + "' must be a number");
  return obj.at(key).get<double>();
}

std::int64_t get_integer(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.at(key).is_number_integer()) bad("'" + where + key + "' must be an integer");
  return obj.at(key).get<std::int64_t>();
}

MockDiffusionBackend::Profile diffusion_profile(std::string_view name) {
  if (name == "identity") return MockDiffusionBackend::Profile::identity;
  if (name == "deterministic") return MockDiffusionBackend::Profile::deterministic;
  bad("unknown mock diffusion profile '" + std::string(name) + "'");
}

}  // namespace

void ServiceConfig::validate() const {
  moderation.validate();
  pipeline.validate();
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos || colon == 0) bad("listen must be host:port");
  int port = -1;
  try {
    port = std::stoi(listen.substr(colon + 1));
  } catch (const std::exception&) {
    bad("listen port is not a number");
  }
  if (port < 0 || port > 65535) bad("listen port out of range");
  if (storage_path.empty()) bad("storage_path must be set");
  if (max_image_bytes == 0) bad("max_image_bytes must be positive");
  if (concurrency_per_role < 1) bad("concurrency_per_role must be >= 1");
  if (job_workers < 1) bad("job_workers must be >= 1");
  std::set<BackendRole> seen;
  for (const auto& d : live_backends) {
    if (!seen.insert(d.role).second) bad("duplicate backend descriptor for " + std::string(to_string(d.role)));
    if (d.timeout.count() <= 0) bad("backend timeout must be positive");
    if (d.base_url.rfind("http://", 0) != 0 && d.base_url.rfind("https://", 0) != 0) {
      bad("backend base_url must start with http:// or https://");
    }
  }
  if (default_profile == Profile::live && live_backends.empty()) bad("live profile selected without backends");
  if (!(mock.default_score >= 0.0 && mock.default_score <= 1.0)) bad("mock.default_score must lie in [0, 1]");
}

ServiceConfig config_from_json(const json& doc) {
  ServiceConfig cfg;
  check_keys(doc, "", {"listen", "storage_path", "dictionary_path", "max_image_bytes", "profile", "auth_token_env",
                       "concurrency_per_role", "job_workers", "moderation", "pipeline", "backends", "mock"});
  if (doc.contains("listen")) cfg.listen = get_as<std::string>(doc, "listen", "");
  if (doc.contains("storage_path")) cfg.storage_path = get_as<std::string>(doc, "storage_path", "");
  if (doc.contains("dictionary_path")) cfg.dictionary_path = get_as<std::string>(doc, "dictionary_path", "");
  if (doc.contains("max_image_bytes")) {
    const auto v = get_integer(doc, "max_image_bytes", "");
    if (v <= 0) bad("max_image_bytes must be positive");
    cfg.max_image_bytes = static_cast<std::size_t>(v);
  }
  if (doc.contains("profile")) cfg.default_profile = profile_from_string(get_as<std::string>(doc, "profile", ""));
  if (doc.contains("auth_token_env")) cfg.auth_token_env = get_as<std::string>(doc, "auth_token_env", "");
  if (doc.contains("concurrency_per_role")) {
    cfg.concurrency_per_role = static_cast<int>(get_integer(doc, "concurrency_per_role", ""));
  }
  if (doc.contains("job_workers")) cfg.job_workers = static_cast<int>(get_integer(doc, "job_workers", ""));

  if (doc.contains("moderation")) {
    const auto& m = doc["moderation"];
    const std::string w = "moderation.";
    check_keys(m, w, {"threshold", "require_caption", "deadline_ms", "paths"});
    if (m.contains("threshold")) cfg.moderation.score_threshold = get_number(m, "threshold", w);
    if (m.contains("require_caption")) cfg.moderation.require_caption = get_as<bool>(m, "require_caption", w);
    if (m.contains("deadline_ms")) cfg.moderation.deadline = std::chrono::milliseconds(get_integer(m, "deadline_ms", w));
    if (m.contains("paths")) {
      try {
        cfg.moderation.paths = moderation_paths_from_string(get_as<std::string>(m, "paths", w));
      } catch (const Error& e) {
        bad(e.what());
      }
    }
  }

  if (doc.contains("pipeline")) {
    const auto& p = doc["pipeline"];
    const std::string w = "pipeline.";
    check_keys(p, w, {"edge_strength", "depth_strength", "baseline_strength", "style_prompt", "seed", "depth_source"});
    if (p.contains("edge_strength")) cfg.pipeline.edge_strength = get_number(p, "edge_strength", w);
    if (p.contains("depth_strength")) cfg.pipeline.depth_strength = get_number(p, "depth_strength", w);
    if (p.contains("baseline_strength")) cfg.pipeline.baseline_strength = get_number(p, "baseline_strength", w);
    if (p.contains("style_prompt")) {
      try {
        cfg.pipeline.style_prompt = parse_prompt(get_as<std::string>(p, "style_prompt", w));
      } catch (const PromptParseError& e) {
        bad(std::string("pipeline.style_prompt: ") + e.what());
      }
    }
    if (p.contains("seed")) {
      const auto v = get_integer(p, "seed", w);
      if (v < 0) bad("pipeline.seed must be non-negative");
      cfg.pipeline.seed = static_cast<std::uint64_t>(v);
    }
    if (p.contains("depth_source")) {
      try {
        cfg.pipeline.depth_source = depth_source_from_string(get_as<std::string>(p, "depth_source", w));
      } catch (const Error& e) {
        bad(e.what());
      }
    }
  }

  if (doc.contains("backends")) {
    const auto& b = doc["backends"];
    check_keys(b, "backends.", {"score", "caption", "condition", "diffusion", "segmentation"});
    for (const auto& [role_name, d] : b.items()) {
      const std::string w = "backends." + role_name + ".";
      check_keys(d, w, {"base_url", "timeout_ms", "auth_env"});
      if (!d.contains("base_url")) bad(w + "base_url is required");
      BackendDescriptor desc;
      desc.role = backend_role_from_string(role_name);
      desc.base_url = get_as<std::string>(d, "base_url", w);
      if (d.contains("timeout_ms")) desc.timeout = std::chrono::milliseconds(get_integer(d, "timeout_ms", w));
      if (d.contains("auth_env")) desc.auth_token_env = get_as<std::string>(d, "auth_env", w);
      cfg.live_backends.push_back(std::move(desc));
    }
  }

  if (doc.contains("mock")) {
    const auto& m = doc["mock"];
    const std::string w = "mock.";
    check_keys(m, w, {"default_score", "score_probe", "caption_seed", "diffusion", "caption_overrides",
                      "score_overrides"});
    if (m.contains("default_score")) cfg.mock.default_score = get_number(m, "default_score", w);
    if (m.contains("score_probe")) cfg.mock.score_probe = get_as<bool>(m, "score_probe", w);
    if (m.contains("caption_seed")) {
      const auto v = get_integer(m, "caption_seed", w);
      if (v < 0) bad("mock.caption_seed must be non-negative");
      cfg.mock.caption_seed = static_cast<std::uint64_t>(v);
    }
    if (m.contains("diffusion")) cfg.mock.diffusion = diffusion_profile(get_as<std::string>(m, "diffusion", w));
    if (m.contains("caption_overrides")) {
      cfg.mock.caption_overrides = get_as<std::map<std::string, std::string>>(m, "caption_overrides", w);
    }
    if (m.contains("score_overrides")) {
      cfg.mock.score_overrides = get_as<std::map<std::string, double>>(m, "score_overrides", w);
    }
  }
  cfg.validate();
  return cfg;
}

json to_json(const ServiceConfig& cfg) {
  json doc;
  doc["listen"] = cfg.listen;
  doc["storage_path"] = cfg.storage_path.string();
  if (cfg.dictionary_path) doc["dictionary_path"] = cfg.dictionary_path->string();
  doc["max_image_bytes"] = cfg.max_image_bytes;
  doc["profile"] = to_string(cfg.default_profile);
  if (cfg.auth_token_env) doc["auth_token_env"] = *cfg.auth_token_env;
  doc["concurrency_per_role"] = cfg.concurrency_per_role;
  doc["job_workers"] = cfg.job_workers;
  doc["moderation"] = {{"threshold", cfg.moderation.score_threshold},
                       {"require_caption", cfg.moderation.require_caption},
                       {"deadline_ms", cfg.moderation.deadline.count()},
                       {"paths", to_string(cfg.moderation.paths)}};
  doc["pipeline"] = {{"edge_strength", cfg.pipeline.edge_strength},
                     {"depth_strength", cfg.pipeline.depth_strength},
                     {"baseline_strength", cfg.pipeline.baseline_strength},
                     {"style_prompt", serialize_prompt(cfg.pipeline.style_prompt)},
                     {"seed", cfg.pipeline.seed},
                     {"depth_source", to_string(cfg.pipeline.depth_source)}};
  json backends = json::object();
  for (const auto& d : cfg.live_backends) {
    json entry = {{"base_url", d.base_url}, {"timeout_ms", d.timeout.count()}};
    if (d.auth_token_env) entry["auth_env"] = *d.auth_token_env;
    backends[std::string(to_string(d.role))] = std::move(entry);
  }
  doc["backends"] = std::move(backends);
  doc["mock"] = {{"default_score", cfg.mock.default_score},
                 {"score_probe", cfg.mock.score_probe},
                 {"caption_seed", cfg.mock.caption_seed},
                 {"diffusion", cfg.mock.diffusion == MockDiffusionBackend::Profile::identity ? "identity"
                                                                                               : "deterministic"},
                 {"caption_overrides", cfg.mock.caption_overrides},
                 {"score_overrides", cfg.mock.score_overrides}};
  return doc;
}

json apply_env_overrides(json doc, const std::map<std::string, std::string>& env) {
  static const std::set<std::string> top = {"listen", "storage_path", "dictionary_path", "max_image_bytes", "profile",
                                            "auth_token_env", "concurrency_per_role", "job_workers", "moderation",
                                            "pipeline", "backends", "mock"};
  const std::string prefix = "STYLEGATE_";
  for (const auto& [name, raw] : env) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string rest = name.substr(prefix.size());
    std::transform(rest.begin(), rest.end(), rest.begin(), [](unsigned char c) { return std::tolower(c); });
    std::vector<std::string> path;
    std::size_t start = 0;
    while (true) {
      const auto sep = rest.find("__", start);
      path.push_back(rest.substr(start, sep - start));
      if (sep == std::string::npos) break;
      start = sep + 2;
    }
    if (path.empty() || !top.count(path.front())) continue;
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json* node = &doc;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      if (!node->contains(path[i]) || !(*node)[path[i]].is_object()) (*node)[path[i]] = json::object();
      node = &(*node)[path[i]];
    }
    (*node)[path.back()] = std::move(value);
  }
  return doc;
}

std::map<std::string, std::string> stylegate_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    std::string_view entry(*e);
    if (entry.rfind("STYLEGATE_", 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    out.emplace(std::string(entry.substr(0, eq)), std::string(entry.substr(eq + 1)));
  }
  return out;
}

ServiceConfig parse_config_text(std::string_view text, bool json_syntax) {
  json doc;
  if (json_syntax) {
    doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) bad("config is not valid JSON");
  } else {
    doc = parse_toml_subset(text);
  }
  return config_from_json(doc);
}

ServiceConfig load_config(const std::filesystem::path& path, bool use_env) {
  const std::string text = read_text_file(path);
  bool json_syntax = path.extension() == ".json";
  if (path.extension() != ".json" && path.extension() != ".toml") {
    const auto first = text.find_first_not_of(" \t\r\n");
    json_syntax = first != std::string::npos && text[first] == '{';
  }
  json doc;
  if (json_syntax) {
    doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) bad("config is not valid JSON");
  } else {
    doc = parse_toml_subset(text);
  }
  if (use_env) doc = apply_env_overrides(std::move(doc), stylegate_environment());
  return config_from_json(doc);
}

std::string config_fingerprint(const ServiceConfig& cfg) {
  json doc = to_json(cfg);
  for (const char* key : {"listen", "storage_path", "job_workers", "concurrency_per_role", "auth_token_env"}) {
    doc.erase(key);
  }
  return sha256_hex(doc.dump());
}

}  // namespace stylegate
