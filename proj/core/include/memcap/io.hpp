#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memcap::io {

/// Whole-file read. Files whose name ends in ".gz" are inflated transparently.
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

/// Big-endian 32-bit read at an offset; throws ValidationError when out of range.
std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset);

/// printf "%.9g": the float format used by every report CSV.
std::string format_double(double value);

}  // namespace memcap::io
