#include "stylegate/job_store.hpp"

#include <atomic>
#include <cctype>
#include <chrono>
#include <ctime>
#include <cstdio>

#include "stylegate/error.hpp"

namespace stylegate {

using nlohmann::json;

std::string_view to_string(JobRecordKind k) {
  switch (k) {
    case JobRecordKind::moderate: return "moderate";
    case JobRecordKind::stylize: return "stylize";
    case JobRecordKind::augment: return "augment";
  }
  return "moderate";
}

JobRecordKind job_record_kind_from_string(std::string_view name) {
  if (name == "moderate") return JobRecordKind::moderate;
  if (name == "stylize") return JobRecordKind::stylize;
  if (name == "augment") return JobRecordKind::augment;
  throw Error(Errc::invalid_manifest, "unknown job kind '" + std::string(name) + "'");
}

std::int64_t system_clock_micros() {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

StoreClock logical_clock(std::int64_t start, std::int64_t step) {
  auto next = std::make_shared<std::atomic<std::int64_t>>(start);
  return [next, step] { return next->fetch_add(step); };
}

std::string format_timestamp(std::int64_t micros) {
  const std::time_t secs = static_cast<std::time_t>(micros / 1'000'000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%06lldZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<long long>(micros % 1'000'000));
  return buf;
}

json to_json(const JobRecord& r, bool include_timestamps) {
  json history = json::array();
  for (const auto& e : r.history) {
    json ev = {{"seq", e.seq}, {"event", e.name}};
    if (include_timestamps) ev["at"] = format_timestamp(e.at);
    if (e.state) ev["state"] = *e.state;
    if (!e.detail.is_null()) ev["detail"] = e.detail;
    history.push_back(std::move(ev));
  }
  json doc = {{"job_id", r.job_id},
              {"kind", to_string(r.kind)},
              {"state", r.state},
              {"config_fingerprint", r.fingerprint},
              {"input_digest", r.input_digest},
              {"history", std::move(history)},
              {"result", r.result}};
  if (include_timestamps) {
    doc["created_at"] = format_timestamp(r.created_at);
    doc["updated_at"] = format_timestamp(r.updated_at);
  }
  return doc;
}

JobStore::JobStore(std::filesystem::path root, StoreClock clock) : root_(std::move(root)), clock_(std::move(clock)) {
  std::error_code ec;
  std::filesystem::create_directories(root_ / "artifacts", ec);
  if (ec) throw Error(Errc::io_error, "cannot create storage directory " + root_.string() + ": " + ec.message());
  replay();
  log_.open(root_ / "jobs.jsonl", std::ios::app | std::ios::binary);
  if (!log_) throw Error(Errc::io_error, "storage path is not writable: " + root_.string());
}

void JobStore::replay() {
  const auto path = root_ / "jobs.jsonl";
  std::ifstream in(path, std::ios::binary);
  if (!in) return;
  std::string line;
  std::size_t lineno = 0;
  std::uintmax_t good_bytes = 0;
  bool torn = false;
  while (std::getline(in, line)) {
    ++lineno;
    const bool had_newline = !in.eof();
    if (!line.empty()) {
      json doc = json::parse(line, nullptr, false);
      if (doc.is_discarded() || !had_newline) {
        // A torn final line from a crash mid-write is dropped.
        if (!had_newline) {
          torn = true;
          break;
        }
        throw Error(Errc::invalid_manifest, "corrupt job log at line " + std::to_string(lineno));
      }
      apply(doc);
    }
    good_bytes += line.size() + 1;
  }
  in.close();
  if (torn) std::filesystem::resize_file(path, good_bytes);
}

void JobStore::apply(const json& line) {
  const std::string op = line.at("op");
  const std::string id = line.at("job_id");
  const std::int64_t at = line.at("at");
  last_at_ = std::max(last_at_, at);
  if (op == "create") {
    JobRecord r;
    r.job_id = id;
    r.kind = job_record_kind_from_string(line.at("kind").get<std::string>());
    r.fingerprint = line.at("fingerprint");
    r.input_digest = line.at("input_digest");
    r.created_at = r.updated_at = at;
    r.history.push_back(JobEvent{0, at, "created", "created", nullptr});
    order_.push_back(id);
    index_[id] = std::move(r);
    ++creates_;
    return;
  }
  auto& r = require(id);
  r.updated_at = at;
  if (op == "event") {
    JobEvent e;
    e.seq = r.history.size();
    e.at = at;
    e.name = line.at("event");
    if (line.contains("state")) {
      e.state = line["state"].get<std::string>();
      r.state = *e.state;
    }
    if (line.contains("detail")) e.detail = line["detail"];
    r.history.push_back(std::move(e));
  } else if (op == "result") {
    r.result = line.at("result");
  } else {
    throw Error(Errc::invalid_manifest, "unknown job log op '" + op + "'");
  }
}

void JobStore::write_line(const json& line) {
  log_ << line.dump() << '\n';
  log_.flush();
  if (!log_) throw Error(Errc::io_error, "job log write failed");
}

std::int64_t JobStore::now() {
  const std::int64_t t = std::max(clock_(), last_at_ + 1);
  last_at_ = t;
  return t;
}

JobRecord& JobStore::require(const std::string& job_id) {
  auto it = index_.find(job_id);
  if (it == index_.end()) throw Error(Errc::invalid_state, "unknown job " + job_id);
  return it->second;
}

JobRecord JobStore::create(JobRecordKind kind, const std::string& fingerprint, const std::string& input_digest) {
  std::lock_guard lock(mu_);
  const std::string id = derive_uuid(std::string(to_string(kind)) + "|" + fingerprint + "|" + input_digest + "|" +
                                     std::to_string(creates_));
  json line = {{"op", "create"},           {"job_id", id},
               {"kind", to_string(kind)},  {"fingerprint", fingerprint},
               {"input_digest", input_digest}, {"at", now()}};
  write_line(line);
  apply(line);
  return index_.at(id);
}

JobRecord JobStore::append_event(const std::string& job_id, const std::string& name, json detail,
                                 std::optional<std::string> new_state) {
  std::lock_guard lock(mu_);
  require(job_id);
  json line = {{"op", "event"}, {"job_id", job_id}, {"event", name}, {"at", now()}};
  if (new_state) line["state"] = *new_state;
  if (!detail.is_null()) line["detail"] = std::move(detail);
  write_line(line);
  apply(line);
  return index_.at(job_id);
}

JobRecord JobStore::set_result(const std::string& job_id, json result) {
  std::lock_guard lock(mu_);
  require(job_id);
  json line = {{"op", "result"}, {"job_id", job_id}, {"result", std::move(result)}, {"at", now()}};
  write_line(line);
  apply(line);
  return index_.at(job_id);
}

std::optional<JobRecord> JobStore::get(const std::string& job_id) const {
  std::lock_guard lock(mu_);
  auto it = index_.find(job_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<JobRecord> JobStore::list() const {
  std::lock_guard lock(mu_);
  std::vector<JobRecord> out;
  for (const auto& id : order_) out.push_back(index_.at(id));
  return out;
}

std::size_t JobStore::size() const {
  std::lock_guard lock(mu_);
  return index_.size();
}

namespace {
bool safe_name(const std::string& s) {
  if (s.empty() || s == "." || s == "..") return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-')) return false;
  }
  return true;
}
}  // namespace

std::filesystem::path JobStore::artifact_path(const std::string& job_id, const std::string& name) const {
  if (!safe_name(job_id) || !safe_name(name)) throw Error(Errc::invalid_state, "invalid artifact reference");
  return root_ / "artifacts" / job_id / name;
}

void JobStore::put_artifact(const std::string& job_id, const std::string& name, std::span<const std::uint8_t> bytes) {
  write_file(artifact_path(job_id, name), bytes);
}

std::optional<Bytes> JobStore::get_artifact(const std::string& job_id, const std::string& name) const {
  if (!safe_name(job_id) || !safe_name(name)) return std::nullopt;
  const auto p = artifact_path(job_id, name);
  if (!std::filesystem::is_regular_file(p)) return std::nullopt;
  return read_file(p);
}

}  // namespace stylegate
