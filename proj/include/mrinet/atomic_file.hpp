#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace mrinet {

// Writes to a sibling temporary file and renames it over `path`, so readers
// see either the old file or the complete new one. Throws IoError.
void write_file_atomic(const std::filesystem::path &path, std::string_view bytes);

// Whole file as bytes. Throws IoError.
std::string read_file(const std::filesystem::path &path);

} // namespace mrinet
