#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace taintlens {

std::string sha256_hex(std::string_view bytes);

/// Locates the first balanced JSON value opening with `open` ('[' or '{')
/// that parses successfully. Markdown fences and surrounding prose are
/// skipped. Returns the raw text of that value.
std::optional<std::string> extract_first_json(std::string_view text,
                                              char open);

std::optional<std::string> read_file(const std::filesystem::path &path);
/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path &path,
                       std::string_view contents);

std::vector<std::string> split_lines(std::string_view text);

/// RFC 4180-style field quoting and splitting, used for prompt rows.
std::string csv_field(std::string_view field);
std::vector<std::string> csv_split(std::string_view line);

} // namespace taintlens
