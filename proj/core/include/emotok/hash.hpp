#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace emotok {

// SHA-256 of a byte string, lowercase hex.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace emotok
