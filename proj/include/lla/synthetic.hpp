#pragma once

// Deterministic 7-class toy dataset for smoke tests: each class is a noisy
// RGB image with a bright horizontal band at a class-specific height and a
// class-specific dominant channel. Bands are mirror-symmetric, so horizontal
// flips keep the label meaningful.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "lla/image.hpp"
#include "lla/manifest.hpp"
#include "lla/training.hpp"

namespace lla {

struct SyntheticSet {
    DatasetManifest manifest;
    std::map<std::string, Image> images;  // keyed by image_path
};

SyntheticSet make_synthetic(std::size_t per_class, std::size_t size, std::uint64_t seed);

/// Writes images under `dir` and the manifest to `dir / "manifest.csv"`.
void write_synthetic(const SyntheticSet& set, const std::filesystem::path& dir);

/// Serves images from memory; the set must outlive the provider.
ImageProvider memory_images(const SyntheticSet& set);

}  // namespace lla
