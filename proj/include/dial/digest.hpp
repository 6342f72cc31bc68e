#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace dial {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a file's contents. Throws dial::Error if unreadable.
std::string file_sha256_hex(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

/// Writes `contents` to `dir/stem.<digest12>.ext` and returns the path.
///
/// Outputs are write-once: if the target exists with identical bytes it is
/// left alone, and if it exists with different bytes dial::Error is thrown.
std::filesystem::path write_once_with_digest(const std::filesystem::path& dir, std::string_view stem,
                                             std::string_view ext, std::string_view contents);

/// For a path named `stem.<hex>.ext`, checks that the content digest starts
/// with <hex>. Paths without a digest suffix pass unchecked.
void verify_digest_suffix(const std::filesystem::path& path);

} // namespace dial
