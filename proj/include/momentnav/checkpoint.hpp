#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "momentnav/json.hpp"
#include "momentnav/mathcore.hpp"

namespace momentnav {

/// 64-bit FNV-1a. Used for artifact fingerprints, not for security.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);
/// Hex FNV-1a of a file's bytes; throws ArgumentError if unreadable.
std::string file_hash(const std::filesystem::path& path);

/// Writes `<path>` (JSON manifest: name -> shape + byte offset, plus `meta`)
/// and `<path>.bin` (little-endian float64 blob, params in order).
void save_checkpoint(const std::filesystem::path& path, std::span<const Param* const> params,
                     const json& meta = json::object());

/// Loads values into `params` by name; shapes must match. Returns the manifest's `meta`.
json load_checkpoint(const std::filesystem::path& path, std::span<Param* const> params);

/// Reads just the manifest's `meta` object.
json read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace momentnav
