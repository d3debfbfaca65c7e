#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace alsim {

// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

// Hex SHA-256 of a file's contents; throws IoError when unreadable.
std::string sha256_file(const std::filesystem::path& path);

// First 8 bytes of SHA-256(bytes), little-endian. Used to derive RNG seeds.
std::uint64_t sha256_u64(std::string_view bytes);

}  // namespace alsim
