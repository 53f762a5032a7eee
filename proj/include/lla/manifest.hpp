#pragma once

// Dataset manifests and the class-rebalancing pipeline: thin the two largest
// classes by keeping every k-th frame of each continuous run, then top up the
// rarest classes from external datasets.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace lla {

inline constexpr std::size_t kNumClasses = 7;

/// Label encoding follows the column order of the expression tables.
enum class Expression : int { anger = 0, disgust, fear, happiness, sadness, surprise, neutral };

std::string_view class_name(int label);
/// Accepts canonical names, the short forms "happy"/"sad", or a decimal index.
int parse_class(std::string_view name);

enum class Source { primary, external_a, external_b };

std::string_view source_name(Source s);

struct SampleRecord {
    std::string sequence_id;
    std::uint64_t frame_index = 0;
    std::string image_path;
    int label = 0;
    Source source = Source::primary;

    bool operator==(const SampleRecord&) const = default;
};

using ClassCounts = std::array<std::size_t, kNumClasses>;

struct DatasetManifest {
    std::vector<SampleRecord> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    ClassCounts class_counts() const;
    bool operator==(const DatasetManifest&) const = default;
};

inline constexpr std::string_view kManifestHeader = "sequence_id,frame_index,image_path,label,source";

/// Throws FormatError carrying the 1-based line number of the first bad row,
/// including duplicate (sequence_id, frame_index) pairs.
DatasetManifest parse_manifest(std::string_view csv_text);
std::string format_manifest(const DatasetManifest& manifest);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Keeps run-relative offsets 0, k, 2k, ... of every maximal span of
/// consecutive frame indices sharing (sequence_id, label). Classes missing
/// from `k_by_class` keep every frame. Output preserves input order.
DatasetManifest undersample_sequences(const DatasetManifest& manifest,
                                      const std::map<int, std::size_t>& k_by_class);

struct MergeResult {
    DatasetManifest manifest;
    ClassCounts added{};
    ClassCounts shortfall{};
};

/// Appends up to quota[c] supplement records of class c, in supplement order.
/// Supplement records must carry an external source tag.
MergeResult merge_external(const DatasetManifest& base, const DatasetManifest& supplement,
                           const std::map<int, std::size_t>& quota_by_class);

struct RebalanceReport {
    ClassCounts before{};
    ClassCounts removed{};
    ClassCounts added{};
    ClassCounts after{};
    ClassCounts shortfall{};

    std::size_t total_after() const;
    /// {class: {before, removed, added, after}} plus a "shortfall" map for
    /// classes whose quota was not met.
    nlohmann::ordered_json to_json() const;
};

struct RebalanceResult {
    DatasetManifest manifest;
    RebalanceReport report;
};

RebalanceResult rebalance(const DatasetManifest& manifest, const std::map<int, std::size_t>& k_by_class,
                          const DatasetManifest& supplement, const std::map<int, std::size_t>& quota_by_class);

}  // namespace lla
