#pragma once

// Checkpoint layout (all integers little-endian):
//
//   8 bytes   magic "LLACKPT1"
//   u64       network config digest
//   u64       entry count
//   per entry:
//     u64     name length, then the name bytes
//     u64 x4  shape (n, c, h, w)
//     f64 x N raw IEEE-754 values, N = n*c*h*w

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "lla/backbone.hpp"

namespace lla {

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

std::string serialize_checkpoint(const ParamStore& params, std::uint64_t config_digest);

/// Overwrites values in `into` by name. Every entry of `into` must be present
/// with a matching shape. Returns the stored config digest. Throws FormatError,
/// or ConfigError when `expected_digest` is given and differs.
std::uint64_t deserialize_checkpoint(std::string_view bytes, ParamStore& into,
                                     std::optional<std::uint64_t> expected_digest = std::nullopt);

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, std::uint64_t config_digest);
std::uint64_t load_checkpoint(const std::filesystem::path& path, ParamStore& into,
                              std::optional<std::uint64_t> expected_digest = std::nullopt);

}  // namespace lla
