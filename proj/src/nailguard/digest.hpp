#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace nailguard {

/// Lowercase hex SHA-256 of a byte range.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view bytes);

/// Streams the file through SHA-256. Throws IoError when unreadable.
std::string sha256_file(const std::filesystem::path& path);

/// Standard base64 with padding, no line breaks.
std::string base64_encode(std::span<const std::uint8_t> bytes);

}  // namespace nailguard
