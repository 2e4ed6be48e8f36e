#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace hqsd {

/// Shortest text that reads back to the same double.
std::string format_double(double v);

/// Writes text to path, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);

std::string read_text_file(const std::filesystem::path& path);

/// Builds the "x1,...,xd" header fragment.
std::string coord_header(std::size_t d, const std::string& prefix = "x");

}  // namespace hqsd
