#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace latte {

std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) noexcept;

/// Lower-case 16-digit hex rendering of a 64-bit value.
std::string hex64(std::uint64_t value);

/// Git blob object id: SHA-1 over "blob <size>\0" followed by the content.
std::string git_blob_hash(std::string_view content);
std::string git_blob_hash_file(const std::filesystem::path& path);

}  // namespace latte
