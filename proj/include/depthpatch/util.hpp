#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace depthpatch {

std::string sha256_hex(std::string_view bytes);
std::string sha256_hex(std::span<const double> values);

// Writes to a sibling temp file, then renames over `path`, so readers never
// observe a partially written file.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

// Throws DataError when the file cannot be read.
std::string read_file(const std::filesystem::path& path);

}  // namespace depthpatch
