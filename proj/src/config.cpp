#include "lla/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace lla {

namespace {

using nlohmann::json;

std::string join(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) {
        if (!out.empty()) out += "\n";
        out += l;
    }
    return out;
}

std::string message(const ConfigError& e) {
    const std::string w = e.what();
    return w.size() > e.path().size() + 2 ? w.substr(e.path().size() + 2) : w;
}

class Reader {
public:
    std::vector<std::string> issues;

    void fail(const std::string& pointer, const std::string& what) { issues.push_back(pointer + ": " + what); }

    // Returns false (and records an issue) unless `node` is an object.
    bool object(const json& node, const std::string& pointer, std::initializer_list<const char*> allowed) {
        if (!node.is_object()) {
            fail(pointer.empty() ? "/" : pointer, "expected an object");
            return false;
        }
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& [key, _] : node.items()) {
            if (!ok.count(key)) fail(pointer + "/" + key, "unknown key");
        }
        return true;
    }

    void uint(const json& obj, const char* key, const std::string& pointer, std::size_t& out) {
        if (!obj.contains(key)) return;
        const json& v = obj[key];
        if (!v.is_number_unsigned()) {
            fail(pointer + "/" + key, "expected a non-negative integer");
            return;
        }
        out = v.get<std::size_t>();
    }

    void u64(const json& obj, const char* key, const std::string& pointer, std::uint64_t& out) {
        if (!obj.contains(key)) return;
        const json& v = obj[key];
        if (!v.is_number_unsigned()) {
            fail(pointer + "/" + key, "expected a non-negative integer");
            return;
        }
        out = v.get<std::uint64_t>();
    }

    void number(const json& obj, const char* key, const std::string& pointer, double& out) {
        if (!obj.contains(key)) return;
        const json& v = obj[key];
        if (!v.is_number()) {
            fail(pointer + "/" + key, "expected a number");
            return;
        }
        out = v.get<double>();
    }

    void boolean(const json& obj, const char* key, const std::string& pointer, bool& out) {
        if (!obj.contains(key)) return;
        const json& v = obj[key];
        if (!v.is_boolean()) {
            fail(pointer + "/" + key, "expected a boolean");
            return;
        }
        out = v.get<bool>();
    }

    std::optional<std::string> string(const json& obj, const char* key, const std::string& pointer) {
        if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
        const json& v = obj[key];
        if (!v.is_string()) {
            fail(pointer + "/" + key, "expected a string");
            return std::nullopt;
        }
        return v.get<std::string>();
    }

    void numbers(const json& obj, const char* key, const std::string& pointer, std::vector<double>& out) {
        if (!obj.contains(key)) return;
        const json& v = obj[key];
        if (!v.is_array() || v.empty()) {
            fail(pointer + "/" + key, "expected a non-empty array of numbers");
            return;
        }
        std::vector<double> vals;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) {
                fail(pointer + "/" + key + "/" + std::to_string(i), "expected a number");
                return;
            }
            vals.push_back(v[i].get<double>());
        }
        out = std::move(vals);
    }
};

void read_network(Reader& r, const json& doc, NetworkConfig& net) {
    const std::string p = "/network";
    if (!doc.contains("network")) return;
    const json& n = doc["network"];
    if (!r.object(n, p, {"preset", "input", "stem", "stages", "llam_kernel", "classes", "use_llam"})) return;
    if (auto preset = r.string(n, "preset", p)) {
        try {
            net = NetworkConfig::from_preset(*preset);
        } catch (const ConfigError& e) {
            r.fail(p + "/preset", message(e));
        }
    }
    if (n.contains("input")) {
        const json& in = n["input"];
        if (!in.is_array() || in.size() != 3 ||
            !std::all_of(in.begin(), in.end(), [](const json& v) { return v.is_number_unsigned(); })) {
            r.fail(p + "/input", "expected [channels, height, width]");
        } else {
            net.in_channels = in[0].get<std::size_t>();
            net.in_h = in[1].get<std::size_t>();
            net.in_w = in[2].get<std::size_t>();
        }
    }
    if (n.contains("stem") && r.object(n["stem"], p + "/stem", {"channels", "kernel", "stride"})) {
        r.uint(n["stem"], "channels", p + "/stem", net.stem_channels);
        r.uint(n["stem"], "kernel", p + "/stem", net.stem_kernel);
        r.uint(n["stem"], "stride", p + "/stem", net.stem_stride);
    }
    if (n.contains("stages")) {
        const json& st = n["stages"];
        if (!st.is_array()) {
            r.fail(p + "/stages", "expected an array");
        } else {
            net.stages.clear();
            for (std::size_t i = 0; i < st.size(); ++i) {
                const std::string sp = p + "/stages/" + std::to_string(i);
                StageSpec s;
                if (r.object(st[i], sp, {"blocks", "channels", "stride"})) {
                    r.uint(st[i], "blocks", sp, s.blocks);
                    r.uint(st[i], "channels", sp, s.channels);
                    r.uint(st[i], "stride", sp, s.stride);
                }
                net.stages.push_back(s);
            }
        }
    }
    r.uint(n, "llam_kernel", p, net.llam_kernel);
    r.uint(n, "classes", p, net.classes);
    r.boolean(n, "use_llam", p, net.use_llam);
}

void read_train(Reader& r, const json& doc, TrainConfig& t) {
    const std::string p = "/train";
    if (!doc.contains("train")) return;
    const json& n = doc["train"];
    if (!r.object(n, p, {"base_lr", "momentum", "weight_decay", "batch_size", "decay_start_epoch", "decay_rate",
                         "max_epochs", "exempt_norm_and_bias", "freeze_llam", "stop_at_train_acc", "eval_every"})) {
        return;
    }
    r.number(n, "base_lr", p, t.base_lr);
    r.number(n, "momentum", p, t.momentum);
    r.number(n, "weight_decay", p, t.weight_decay);
    r.uint(n, "batch_size", p, t.batch_size);
    r.uint(n, "decay_start_epoch", p, t.decay_start_epoch);
    r.number(n, "decay_rate", p, t.decay_rate);
    r.uint(n, "max_epochs", p, t.max_epochs);
    r.boolean(n, "exempt_norm_and_bias", p, t.exempt_norm_and_bias);
    r.boolean(n, "freeze_llam", p, t.freeze_llam);
    if (n.contains("stop_at_train_acc") && !n["stop_at_train_acc"].is_null()) {
        double v = 0.0;
        r.number(n, "stop_at_train_acc", p, v);
        t.stop_at_train_acc = v;
    }
    r.uint(n, "eval_every", p, t.eval_every);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& s) {
    std::filesystem::path path(s);
    return path.is_absolute() ? path : base / path;
}

void read_data(Reader& r, const json& doc, const std::filesystem::path& base, RunConfig& cfg) {
    const std::string p = "/data";
    PipelineConfig& d = cfg.data;
    d.image_root = base;
    if (!doc.contains("data")) return;
    const json& n = doc["data"];
    if (!r.object(n, p, {"train_manifest", "val_manifest", "image_root", "augment", "pad", "train_crop",
                         "eval_crop", "tencrop", "prefetch"})) {
        return;
    }
    if (auto s = r.string(n, "train_manifest", p)) cfg.train_manifest = resolve(base, *s);
    if (auto s = r.string(n, "val_manifest", p)) cfg.val_manifest = resolve(base, *s);
    if (auto s = r.string(n, "image_root", p)) d.image_root = resolve(base, *s);
    r.boolean(n, "augment", p, d.augment);
    r.uint(n, "pad", p, d.pad);
    r.uint(n, "train_crop", p, d.train_crop);
    r.uint(n, "eval_crop", p, d.eval_crop);
    r.boolean(n, "tencrop", p, d.tencrop);
    r.uint(n, "prefetch", p, d.prefetch);
}

void read_normalization(Reader& r, const json& doc, Normalization& norm) {
    const std::string p = "/normalization";
    if (!doc.contains("normalization")) return;
    const json& n = doc["normalization"];
    if (!r.object(n, p, {"mean", "std"})) return;
    r.numbers(n, "mean", p, norm.mean);
    r.numbers(n, "std", p, norm.std);
    for (std::size_t i = 0; i < norm.std.size(); ++i) {
        if (!(norm.std[i] > 0.0)) r.fail(p + "/std/" + std::to_string(i), "must be > 0");
    }
}

// Maps ConfigError paths from the typed validators ("stem.stride", "stages/1/channels",
// "train/momentum") onto JSON pointers.
std::string pointer_for(const std::string& section, const std::string& path) {
    std::string out = path;
    std::replace(out.begin(), out.end(), '.', '/');
    if (out.rfind(section + "/", 0) == 0) return "/" + out;
    return "/" + section + "/" + out;
}

}  // namespace

ConfigValidationError::ConfigValidationError(std::vector<std::string> issues)
    : ConfigError("config", join(issues)),
      issues_(std::move(issues)) {}

RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                           std::optional<std::uint64_t> seed_override) {
    Reader r;
    RunConfig cfg;
    if (r.object(doc, "", {"seed", "network", "train", "data", "normalization"})) {
        r.u64(doc, "seed", "", cfg.seed);
        read_network(r, doc, cfg.network);
        read_train(r, doc, cfg.train);
        read_data(r, doc, base_dir, cfg);
        read_normalization(r, doc, cfg.data.normalization);
    }
    if (seed_override) cfg.seed = *seed_override;
    cfg.network.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    if (r.issues.empty()) {
        try {
            cfg.network.validate();
        } catch (const ConfigError& e) {
            r.fail(pointer_for("network", e.path()), message(e));
        }
        try {
            cfg.train.validate();
        } catch (const ConfigError& e) {
            r.fail(pointer_for("train", e.path()), message(e));
        }
    }
    if (!r.issues.empty()) throw ConfigValidationError(std::move(r.issues));
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
    std::ifstream f(path);
    if (!f) throw ConfigError("/", "cannot read config " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("/", std::string("invalid JSON: ") + e.what());
    }
    return parse_run_config(doc, path.parent_path(), seed_override);
}

nlohmann::ordered_json RunConfig::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    const NetworkConfig& n = network;
    nlohmann::ordered_json stages = nlohmann::ordered_json::array();
    for (const auto& s : n.stages) stages.push_back({{"blocks", s.blocks}, {"channels", s.channels}, {"stride", s.stride}});
    j["network"] = {{"preset", n.preset},
                    {"input", {n.in_channels, n.in_h, n.in_w}},
                    {"stem", {{"channels", n.stem_channels}, {"kernel", n.stem_kernel}, {"stride", n.stem_stride}}},
                    {"stages", stages},
                    {"llam_kernel", n.llam_kernel},
                    {"classes", n.classes},
                    {"use_llam", n.use_llam}};
    const TrainConfig& t = train;
    j["train"] = {{"base_lr", t.base_lr},
                  {"momentum", t.momentum},
                  {"weight_decay", t.weight_decay},
                  {"batch_size", t.batch_size},
                  {"decay_start_epoch", t.decay_start_epoch},
                  {"decay_rate", t.decay_rate},
                  {"max_epochs", t.max_epochs},
                  {"exempt_norm_and_bias", t.exempt_norm_and_bias},
                  {"freeze_llam", t.freeze_llam},
                  {"stop_at_train_acc", t.stop_at_train_acc ? nlohmann::ordered_json(*t.stop_at_train_acc)
                                                            : nlohmann::ordered_json(nullptr)},
                  {"eval_every", t.eval_every}};
    j["data"] = {{"train_manifest", train_manifest.string()},
                 {"val_manifest", val_manifest ? nlohmann::ordered_json(val_manifest->string())
                                               : nlohmann::ordered_json(nullptr)},
                 {"image_root", data.image_root.string()},
                 {"augment", data.augment},
                 {"pad", data.pad},
                 {"train_crop", data.train_crop},
                 {"eval_crop", data.eval_crop},
                 {"tencrop", data.tencrop},
                 {"prefetch", data.prefetch}};
    j["normalization"] = {{"mean", data.normalization.mean}, {"std", data.normalization.std}};
    return j;
}

}  // namespace lla
