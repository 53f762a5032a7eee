#include "lla/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "lla/errors.hpp"

namespace lla {

namespace {

constexpr std::array<std::string_view, kNumClasses> kClassNames{
    "anger", "disgust", "fear", "happiness", "sadness", "surprise", "neutral"};

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Splits one CSV line; double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_csv(std::string_view line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"' && cur.empty()) {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (quoted) throw FormatError("unterminated quoted field", line_no);
    fields.push_back(std::move(cur));
    return fields;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += "\"\"";
        else out.push_back(ch);
    }
    return out + "\"";
}

template <typename T>
bool parse_uint(std::string_view s, T& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

Source parse_source(std::string_view s, std::size_t line_no) {
    if (s == "primary") return Source::primary;
    if (s == "external_a") return Source::external_a;
    if (s == "external_b") return Source::external_b;
    throw FormatError("unknown source '" + std::string(s) + "'", line_no);
}

using RecordKey = std::pair<std::string, std::uint64_t>;

}  // namespace

std::string_view class_name(int label) {
    if (label < 0 || label >= static_cast<int>(kNumClasses)) {
        throw std::out_of_range("class label " + std::to_string(label) + " out of range");
    }
    return kClassNames[static_cast<std::size_t>(label)];
}

int parse_class(std::string_view name) {
    const std::string n = lower(name);
    for (std::size_t i = 0; i < kClassNames.size(); ++i) {
        if (n == kClassNames[i]) return static_cast<int>(i);
    }
    if (n == "happy") return static_cast<int>(Expression::happiness);
    if (n == "sad") return static_cast<int>(Expression::sadness);
    int v = -1;
    if (parse_uint(n, v) && v >= 0 && v < static_cast<int>(kNumClasses)) return v;
    throw std::invalid_argument("unknown class '" + std::string(name) + "'");
}

std::string_view source_name(Source s) {
    switch (s) {
        case Source::primary: return "primary";
        case Source::external_a: return "external_a";
        case Source::external_b: return "external_b";
    }
    return "primary";
}

ClassCounts DatasetManifest::class_counts() const {
    ClassCounts counts{};
    for (const auto& r : records) ++counts[static_cast<std::size_t>(r.label)];
    return counts;
}

DatasetManifest parse_manifest(std::string_view text) {
    DatasetManifest m;
    std::set<RecordKey> seen;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (!text.empty()) {
        const std::size_t nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!header_seen) {
            if (line.size() >= 3 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
            if (line != kManifestHeader) {
                throw FormatError("expected header '" + std::string(kManifestHeader) + "'", line_no);
            }
            header_seen = true;
            continue;
        }
        if (line.empty()) continue;
        auto f = split_csv(line, line_no);
        if (f.size() != 5) {
            throw FormatError("expected 5 fields, got " + std::to_string(f.size()), line_no);
        }
        SampleRecord r;
        r.sequence_id = f[0];
        if (r.sequence_id.empty()) throw FormatError("empty sequence_id", line_no);
        if (!parse_uint(f[1], r.frame_index)) throw FormatError("bad frame_index '" + f[1] + "'", line_no);
        r.image_path = f[2];
        if (!parse_uint(f[3], r.label) || r.label >= static_cast<int>(kNumClasses)) {
            throw FormatError("label '" + f[3] + "' outside [0, 7)", line_no);
        }
        r.source = parse_source(f[4], line_no);
        if (!seen.emplace(r.sequence_id, r.frame_index).second) {
            throw FormatError("duplicate (sequence_id, frame_index) (" + r.sequence_id + ", " + f[1] + ")",
                              line_no);
        }
        m.records.push_back(std::move(r));
    }
    if (!header_seen) throw FormatError("missing header", 1);
    return m;
}

std::string format_manifest(const DatasetManifest& manifest) {
    std::string out(kManifestHeader);
    out.push_back('\n');
    for (const auto& r : manifest.records) {
        out += csv_field(r.sequence_id);
        out.push_back(',');
        out += std::to_string(r.frame_index);
        out.push_back(',');
        out += csv_field(r.image_path);
        out.push_back(',');
        out += std::to_string(r.label);
        out.push_back(',');
        out += source_name(r.source);
        out.push_back('\n');
    }
    return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read manifest " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_manifest(ss.str());
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write manifest " + path.string());
    f << format_manifest(manifest);
}

DatasetManifest undersample_sequences(const DatasetManifest& manifest,
                                      const std::map<int, std::size_t>& k_by_class) {
    for (const auto& [label, k] : k_by_class) {
        if (k == 0) {
            throw std::invalid_argument("undersample: k must be >= 1 for class " + std::to_string(label));
        }
    }
    // Group record positions by (sequence, label), ordered by frame index.
    std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const auto& r = manifest.records[i];
        if (k_by_class.count(r.label)) groups[{r.sequence_id, r.label}].push_back(i);
    }
    std::vector<bool> keep(manifest.records.size(), true);
    for (auto& [key, positions] : groups) {
        const std::size_t k = k_by_class.at(key.second);
        std::sort(positions.begin(), positions.end(), [&](std::size_t a, std::size_t b) {
            return manifest.records[a].frame_index < manifest.records[b].frame_index;
        });
        std::size_t offset = 0;
        for (std::size_t j = 0; j < positions.size(); ++j) {
            const bool continues = j > 0 && manifest.records[positions[j]].frame_index ==
                                                manifest.records[positions[j - 1]].frame_index + 1;
            offset = continues ? offset + 1 : 0;
            keep[positions[j]] = offset % k == 0;
        }
    }
    DatasetManifest out;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        if (keep[i]) out.records.push_back(manifest.records[i]);
    }
    return out;
}

MergeResult merge_external(const DatasetManifest& base, const DatasetManifest& supplement,
                           const std::map<int, std::size_t>& quota_by_class) {
    MergeResult res;
    res.manifest = base;
    std::set<RecordKey> seen;
    for (const auto& r : base.records) seen.emplace(r.sequence_id, r.frame_index);
    for (const auto& r : supplement.records) {
        auto q = quota_by_class.find(r.label);
        if (q == quota_by_class.end()) continue;
        auto& added = res.added[static_cast<std::size_t>(r.label)];
        if (added >= q->second) continue;
        if (r.source == Source::primary) {
            throw std::invalid_argument("merge_external: supplement record " + r.sequence_id + "/" +
                                        std::to_string(r.frame_index) + " is tagged primary");
        }
        if (!seen.emplace(r.sequence_id, r.frame_index).second) {
            throw std::invalid_argument("merge_external: supplement record " + r.sequence_id + "/" +
                                        std::to_string(r.frame_index) + " collides with an existing record");
        }
        res.manifest.records.push_back(r);
        ++added;
    }
    for (const auto& [label, quota] : quota_by_class) {
        const auto c = static_cast<std::size_t>(label);
        res.shortfall[c] = quota - res.added[c];
    }
    return res;
}

std::size_t RebalanceReport::total_after() const {
    std::size_t t = 0;
    for (auto v : after) t += v;
    return t;
}

nlohmann::ordered_json RebalanceReport::to_json() const {
    nlohmann::ordered_json j;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        j[std::string(kClassNames[c])] = {
            {"before", before[c]}, {"removed", removed[c]}, {"added", added[c]}, {"after", after[c]}};
    }
    nlohmann::ordered_json shortfalls = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (shortfall[c]) shortfalls[std::string(kClassNames[c])] = shortfall[c];
    }
    j["shortfall"] = shortfalls;
    j["total_after"] = total_after();
    return j;
}

RebalanceResult rebalance(const DatasetManifest& manifest, const std::map<int, std::size_t>& k_by_class,
                          const DatasetManifest& supplement, const std::map<int, std::size_t>& quota_by_class) {
    RebalanceResult res;
    res.report.before = manifest.class_counts();
    DatasetManifest thinned = undersample_sequences(manifest, k_by_class);
    const ClassCounts mid = thinned.class_counts();
    MergeResult merged = merge_external(thinned, supplement, quota_by_class);
    for (std::size_t c = 0; c < kNumClasses; ++c) res.report.removed[c] = res.report.before[c] - mid[c];
    res.report.added = merged.added;
    res.report.shortfall = merged.shortfall;
    res.manifest = std::move(merged.manifest);
    res.report.after = res.manifest.class_counts();
    return res;
}

}  // namespace lla
