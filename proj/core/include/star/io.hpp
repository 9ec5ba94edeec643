#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace star::io {

/// Reads a whole file into memory. Files ending in `.gz` are inflated.
/// Throws IoError when the file is missing or unreadable.
std::string read_file(const std::filesystem::path& path);

/// Writes `contents` atomically (temp file + rename). Creates parent dirs.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// Canonical serialization used for fingerprints: sorted keys, no whitespace.
std::string canonical_dump(const nlohmann::json& value);

/// Short (16 hex chars) fingerprint of a JSON config.
std::string fingerprint(const nlohmann::json& config);

/// Binary artifact container: 8-byte magic, little-endian u64 header length,
/// a JSON header, then the raw payload. The header always carries
/// `payload_bytes` and a SHA-256 `checksum` of the payload.
struct Artifact {
  nlohmann::json header;
  std::vector<std::byte> payload;
};

void write_artifact(const std::filesystem::path& path, nlohmann::json header,
                    std::span<const std::byte> payload);

/// Throws IoError on bad magic, truncation or checksum mismatch.
Artifact read_artifact(const std::filesystem::path& path);

/// Splits on '\n', dropping a trailing '\r' and empty trailing line.
std::vector<std::string_view> split_lines(std::string_view text);

template <typename T>
std::span<const std::byte> as_bytes_of(const std::vector<T>& v) {
  return std::as_bytes(std::span<const T>(v));
}

}  // namespace star::io
