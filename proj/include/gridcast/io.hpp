#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace gridcast::io {

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Shortest-safe decimal that round-trips exactly (%.17g).
std::string format_decimal(double v);
/// C99 hex-float (%a); lossless.
std::string format_hex(double v);

/// Parses a full token as a double (decimal or hex-float); nullopt on junk.
std::optional<double> parse_double(std::string_view token);

}  // namespace gridcast::io
