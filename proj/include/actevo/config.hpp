#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace actevo {

// Malformed or contradictory run configuration. `field` is the dotted key
// path when known, or "line N" for parse-level failures.
struct ConfigError : std::runtime_error {
    std::string field;
    ConfigError(std::string field_path, const std::string& message);
};

// Minimal TOML-subset reader, returning canonical JSON text. Supported:
// [table] headers (dotted), bare keys, dotted keys, basic "..." strings with
// \" \\ \n \t \r escapes, integers (underscore separators allowed), floats,
// booleans, flat arrays (may span lines), # comments. Everything else is a
// ConfigError; run configs never need more than this.
std::string toml_to_json(std::string_view text);

// Dispatches on extension: .toml/.tml through the subset parser, anything
// else parsed as JSON. Either way the result is re-serialized canonically so
// snapshots compare byte-for-byte.
std::string load_config_json(const std::string& path);

}  // namespace actevo
