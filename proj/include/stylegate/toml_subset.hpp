#pragma once

#include <string_view>

#include "json.hpp"

namespace stylegate {

/// Reads the TOML subset used by service configs into a JSON tree: `[table]`
/// and `[a.b]` headers, bare/quoted/dotted keys, basic and literal strings,
/// integers, floats, booleans, single-line arrays and inline tables.
/// Multi-line strings, dates and arrays of tables are rejected.
/// Throws Error(invalid_config) with the offending line number.
nlohmann::json parse_toml_subset(std::string_view text);

}  // namespace stylegate
