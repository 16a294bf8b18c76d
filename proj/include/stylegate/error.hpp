#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace stylegate {

enum class Errc {
  unbalanced_parenthesis,
  malformed_weight,
  empty_segment,
  io_error,
  empty_dictionary,
  invalid_entry,
  dimension_mismatch,
  insufficient_skin_pixels,
  empty_samples,
  non_positive_bandwidth,
  no_usable_entries,
  empty_dataset,
  target_below_original_count,
  invalid_target,
  invalid_config,
  invalid_manifest,
  missing_offline_fields,
  unsupported_format,
  invalid_state,
  backend,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Prompt syntax error; `position()` is a byte offset into the raw prompt.
class PromptParseError : public Error {
 public:
  PromptParseError(Errc code, std::size_t position, const std::string& what)
      : Error(code, what + " at offset " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

enum class BackendRole { score, caption, condition, diffusion, segmentation };

enum class BackendFailure {
  unavailable,
  timeout,
  http_status,
  malformed_response,
  dimension_mismatch,
};

std::string_view to_string(BackendRole role);
std::string_view to_string(BackendFailure cause);
BackendRole backend_role_from_string(std::string_view name);

class BackendError : public Error {
 public:
  BackendError(BackendRole role, BackendFailure cause, const std::string& detail)
      : Error(Errc::backend, std::string(to_string(role)) + " backend: " +
                                 std::string(to_string(cause)) +
                                 (detail.empty() ? "" : " (" + detail + ")")),
        role_(role),
        cause_(cause) {}

  BackendRole role() const noexcept { return role_; }
  BackendFailure cause() const noexcept { return cause_; }

 private:
  BackendRole role_;
  BackendFailure cause_;
};

}  // namespace stylegate
