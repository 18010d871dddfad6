#pragma once

#include <filesystem>
#include <string_view>

#include "json.hpp"

namespace eventcast {

/// Parses the TOML subset used by experiment files: [tables], [dotted.tables],
/// bare or quoted keys, strings, integers, floats, booleans, comments and
/// (possibly nested, multi-line) arrays. Errors carry the line number.
nlohmann::json parse_toml(std::string_view text);
nlohmann::json read_toml(const std::filesystem::path& path);

}  // namespace eventcast
