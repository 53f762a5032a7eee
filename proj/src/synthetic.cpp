#include "lla/synthetic.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace lla {

SyntheticSet make_synthetic(std::size_t per_class, std::size_t size, std::uint64_t seed) {
    if (size < kNumClasses) throw std::invalid_argument("make_synthetic: image size too small");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 12.0);
    SyntheticSet set;
    const std::size_t band = size / kNumClasses;
    for (std::size_t i = 0; i < per_class; ++i) {
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            Image img(3, size, size);
            const std::size_t top = c * band;
            for (std::size_t y = 0; y < size; ++y) {
                const bool in_band = y >= top && y < top + band;
                for (std::size_t x = 0; x < size; ++x) {
                    for (std::size_t ch = 0; ch < 3; ++ch) {
                        double v = 60.0;
                        if (in_band) v = ch == c % 3 ? 230.0 : 150.0;
                        v += noise(rng);
                        img.at(ch, y, x) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
                    }
                }
            }
            SampleRecord r;
            r.sequence_id = "syn_c" + std::to_string(c) + "_" + std::to_string(i);
            r.frame_index = 0;
            r.image_path = "images/c" + std::to_string(c) + "_" + std::to_string(i) + ".ppm";
            r.label = static_cast<int>(c);
            set.images.emplace(r.image_path, std::move(img));
            set.manifest.records.push_back(std::move(r));
        }
    }
    return set;
}

void write_synthetic(const SyntheticSet& set, const std::filesystem::path& dir) {
    for (const auto& [path, img] : set.images) {
        const auto full = dir / path;
        std::filesystem::create_directories(full.parent_path());
        save_image(full, img);
    }
    save_manifest(dir / "manifest.csv", set.manifest);
}

ImageProvider memory_images(const SyntheticSet& set) {
    return [&set](const SampleRecord& r) {
        auto it = set.images.find(r.image_path);
        if (it == set.images.end()) throw std::runtime_error("no in-memory image " + r.image_path);
        return it->second;
    };
}

}  // namespace lla
