#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stylegate/util.hpp"

namespace stylegate {

enum class JobRecordKind { moderate, stylize, augment };
std::string_view to_string(JobRecordKind k);
JobRecordKind job_record_kind_from_string(std::string_view name);

/// Microseconds since the epoch.
using StoreClock = std::function<std::int64_t()>;
std::int64_t system_clock_micros();
/// Starts at `start` and advances by `step` per reading. For reproducible runs.
StoreClock logical_clock(std::int64_t start = 1'700'000'000'000'000, std::int64_t step = 1000);
std::string format_timestamp(std::int64_t micros);

struct JobEvent {
  std::size_t seq = 0;
  std::int64_t at = 0;
  std::string name;
  std::optional<std::string> state;  // set when the event is a state transition
  nlohmann::json detail;
};

struct JobRecord {
  std::string job_id;
  JobRecordKind kind = JobRecordKind::moderate;
  std::string fingerprint;
  std::string input_digest;
  std::int64_t created_at = 0;
  std::int64_t updated_at = 0;
  std::string state = "created";
  std::vector<JobEvent> history;
  nlohmann::json result;  // verdict or result refs
};

nlohmann::json to_json(const JobRecord& r, bool include_timestamps = true);

/// Append-only JSONL log (`jobs.jsonl` under the root) with an in-memory index
/// rebuilt on open. One writer at a time; every mutation is a single line.
class JobStore {
 public:
  explicit JobStore(std::filesystem::path root, StoreClock clock = system_clock_micros);

  /// Id = derive_uuid(kind | fingerprint | input digest | store sequence).
  JobRecord create(JobRecordKind kind, const std::string& fingerprint, const std::string& input_digest);
  /// Timestamps are forced strictly increasing across the store.
  JobRecord append_event(const std::string& job_id, const std::string& name, nlohmann::json detail = nullptr,
                         std::optional<std::string> new_state = std::nullopt);
  JobRecord set_result(const std::string& job_id, nlohmann::json result);

  std::optional<JobRecord> get(const std::string& job_id) const;
  std::vector<JobRecord> list() const;
  std::size_t size() const;

  std::filesystem::path artifact_path(const std::string& job_id, const std::string& name) const;
  void put_artifact(const std::string& job_id, const std::string& name, std::span<const std::uint8_t> bytes);
  std::optional<Bytes> get_artifact(const std::string& job_id, const std::string& name) const;

  const std::filesystem::path& root() const { return root_; }

 private:
  void replay();
  void apply(const nlohmann::json& line);
  void write_line(const nlohmann::json& line);
  std::int64_t now();
  JobRecord& require(const std::string& job_id);

  std::filesystem::path root_;
  StoreClock clock_;
  mutable std::mutex mu_;
  std::ofstream log_;
  std::map<std::string, JobRecord> index_;
  std::vector<std::string> order_;
  std::int64_t last_at_ = 0;
  std::size_t creates_ = 0;
};

}  // namespace stylegate
