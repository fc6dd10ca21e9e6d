#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace momentnav {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// Reads a whole JSON document; errors become ParseError with the line number.
json read_json_file(const std::filesystem::path& path);
/// Writes `doc` pretty-printed with a trailing newline (deterministic bytes).
void write_json_file(const std::filesystem::path& path, const json& doc);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace momentnav
