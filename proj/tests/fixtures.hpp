#pragma once

// Class-count fixtures shaped after the expression dataset's training split.
//
// Undersampling keeps ceil(n/k) frames per run, so a class of N frames laid out
// as m singleton runs plus one long run keeps m + ceil((N - m)/k). Solving for
// the target post-undersampling counts gives m = 621 for neutral (k = 12)
// and m = 425 for happiness (k = 2).

#include <array>
#include <cstddef>
#include <string>

#include "lla/manifest.hpp"

namespace fixture {

// anger, disgust, fear, happiness, sadness, surprise, neutral
inline constexpr std::array<std::size_t, 7> kTrainCounts{25634, 11490, 19279, 171902, 102934, 43306, 546039};
inline constexpr std::array<std::size_t, 7> kExtra{24242, 5062, 6192, 0, 0, 0, 0};
inline constexpr std::array<std::size_t, 7> kAfter{25634 + 24242, 11490 + 5062, 19279 + 6192, 86164,
                                                   102934,        43306,         46073};
inline constexpr std::size_t kTotalAfter = 370376;
inline constexpr std::size_t kNeutralSingletons = 621;
inline constexpr std::size_t kHappySingletons = 425;

inline void add_run(lla::DatasetManifest& m, const std::string& seq, int label, std::size_t first,
                    std::size_t length, std::size_t step = 1, lla::Source src = lla::Source::primary) {
    for (std::size_t i = 0; i < length; ++i) {
        lla::SampleRecord r;
        r.sequence_id = seq;
        r.frame_index = first + i * step;
        r.image_path = seq + "/" + std::to_string(r.frame_index) + ".ppm";
        r.label = label;
        r.source = src;
        m.records.push_back(std::move(r));
    }
}

inline lla::DatasetManifest training_manifest() {
    lla::DatasetManifest m;
    for (int c = 0; c < 7; ++c) {
        const std::size_t n = kTrainCounts[static_cast<std::size_t>(c)];
        std::size_t singles = 0;
        if (c == 6) singles = kNeutralSingletons;
        if (c == 3) singles = kHappySingletons;
        // Singletons: one sequence with every other frame, so no two are adjacent.
        add_run(m, "s" + std::to_string(c), c, 0, singles, 2);
        add_run(m, "v" + std::to_string(c), c, 0, n - singles);
    }
    return m;
}

/// External samples for anger, disgust and fear, with `surplus` more than the
/// quota in each class so the cap is exercised. Disgust mixes both sources.
inline lla::DatasetManifest supplement(std::size_t surplus = 50) {
    lla::DatasetManifest m;
    for (int c = 0; c < 3; ++c) {
        const std::size_t n = kExtra[static_cast<std::size_t>(c)] + surplus;
        if (c == 1) {
            add_run(m, "xa" + std::to_string(c), c, 0, n / 2, 1, lla::Source::external_a);
            add_run(m, "xb" + std::to_string(c), c, 0, n - n / 2, 1, lla::Source::external_b);
        } else {
            add_run(m, "xa" + std::to_string(c), c, 0, n, 1, lla::Source::external_a);
        }
    }
    return m;
}

inline std::map<int, std::size_t> reference_k() { return {{6, 12}, {3, 2}}; }
inline std::map<int, std::size_t> reference_quota() { return {{0, 24242}, {1, 5062}, {2, 6192}}; }

}  // namespace fixture
