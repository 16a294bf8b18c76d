#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stylegate/http_backend.hpp"
#include "stylegate/mock_backends.hpp"
#include "stylegate/moderation.hpp"
#include "stylegate/stylize.hpp"

namespace stylegate {

inline constexpr std::size_t kDefaultMaxImageBytes = 12u * 1024u * 1024u;

enum class Profile { mock, live };
std::string_view to_string(Profile p);
Profile profile_from_string(std::string_view name);

/// Library pipeline defaults plus the service's default style prompt.
PipelineConfig default_service_pipeline();

struct ServiceConfig {
  std::string listen = "127.0.0.1:8080";
  std::filesystem::path storage_path = "stylegate-data";
  std::optional<std::filesystem::path> dictionary_path;  // unset: built-in test dictionary
  std::size_t max_image_bytes = kDefaultMaxImageBytes;
  Profile default_profile = Profile::mock;
  std::optional<std::string> auth_token_env;  // static bearer token for the gateway API
  int concurrency_per_role = 4;
  int job_workers = 2;

  ModerationConfig moderation;
  PipelineConfig pipeline = default_service_pipeline();
  std::vector<BackendDescriptor> live_backends;
  MockProfileOptions mock;

  /// Throws Error(invalid_config).
  void validate() const;
};

/// Strict: unknown keys and wrong types are rejected.
ServiceConfig config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ServiceConfig& cfg);

/// `STYLEGATE_<SECTION>__<KEY>=value` sets `section.key`; values are read as
/// JSON when they parse, else as strings. Variables whose first path element
/// is not a config key are ignored.
nlohmann::json apply_env_overrides(nlohmann::json doc, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> stylegate_environment();

/// TOML or JSON by extension (content sniffing for anything else), then env
/// overrides, then validation.
ServiceConfig load_config(const std::filesystem::path& path, bool use_env = true);
ServiceConfig parse_config_text(std::string_view text, bool json_syntax);

/// SHA-256 over every setting that affects results; listen address, storage
/// path and worker counts are excluded.
std::string config_fingerprint(const ServiceConfig& cfg);

}  // namespace stylegate
