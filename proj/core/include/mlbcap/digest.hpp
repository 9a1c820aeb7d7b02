#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace mlbcap {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

/// First eight digest bytes, big-endian.
std::uint64_t sha256_u64(std::string_view bytes);

std::string base64_encode(std::string_view bytes);

/// Reads a whole file; throws Error(Io) on failure.
std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename so readers never observe a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace mlbcap
