#include "lla/backbone.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "lla/checkpoint.hpp"
#include "lla/errors.hpp"
#include "lla/llam.hpp"

namespace lla {

NetworkConfig NetworkConfig::paper() {
    NetworkConfig c;
    c.preset = "paper";
    c.stages = {{2, 64, 1}, {2, 128, 2}, {2, 256, 2}, {2, 512, 2}};
    return c;
}

NetworkConfig NetworkConfig::tiny() {
    NetworkConfig c;
    c.preset = "tiny";
    c.in_h = c.in_w = 32;
    c.stem_channels = 8;
    c.stages = {{1, 8, 1}, {1, 16, 2}};
    return c;
}

NetworkConfig NetworkConfig::micro() {
    NetworkConfig c;
    c.preset = "micro";
    c.in_h = c.in_w = 8;
    c.stem_channels = 4;
    c.stages = {{1, 4, 1}};
    return c;
}

NetworkConfig NetworkConfig::from_preset(const std::string& name) {
    if (name == "paper") return paper();
    if (name == "tiny") return tiny();
    if (name == "micro") return micro();
    throw ConfigError("preset", "unknown preset '" + name + "' (expected paper, tiny or micro)");
}

void NetworkConfig::validate() const {
    if (in_channels < 1 || in_h < 1 || in_w < 1) throw ConfigError("input", "dimensions must be >= 1");
    if (stem_channels < 1) throw ConfigError("stem.channels", "must be >= 1");
    if (stem_kernel % 2 == 0) throw ConfigError("stem.kernel", "must be odd");
    if (stem_stride < 1) throw ConfigError("stem.stride", "must be >= 1");
    if (preset == "paper" && stem_stride != 1) {
        throw ConfigError("stem.stride", "paper preset keeps the stem at stride 1");
    }
    if (stages.empty()) throw ConfigError("stages", "at least one stage is required");
    std::size_t prev = stem_channels;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const std::string at = "stages/" + std::to_string(i);
        if (stages[i].blocks < 1) throw ConfigError(at + "/blocks", "must be >= 1");
        if (stages[i].stride < 1) throw ConfigError(at + "/stride", "must be >= 1");
        if (stages[i].channels < prev) {
            throw ConfigError(at + "/channels", "channel count may not shrink (" + std::to_string(prev) +
                                                    " -> " + std::to_string(stages[i].channels) + ")");
        }
        prev = stages[i].channels;
    }
    if (llam_kernel % 2 == 0) throw ConfigError("llam_kernel", "must be odd");
    if (classes < 2) throw ConfigError("classes", "must be >= 2");
}

std::size_t NetworkConfig::module_count() const {
    std::size_t n = 0;
    for (const auto& s : stages) n += s.blocks;
    return n;
}

std::string NetworkConfig::to_json_string() const {
    nlohmann::json j;
    j["preset"] = preset;
    j["input"] = {in_channels, in_h, in_w};
    j["stem"] = {{"channels", stem_channels}, {"kernel", stem_kernel}, {"stride", stem_stride}};
    j["stages"] = nlohmann::json::array();
    for (const auto& s : stages) {
        j["stages"].push_back({{"blocks", s.blocks}, {"channels", s.channels}, {"stride", s.stride}});
    }
    j["llam_kernel"] = llam_kernel;
    j["classes"] = classes;
    j["use_llam"] = use_llam;
    return j.dump();
}

std::uint64_t NetworkConfig::digest() const { return fnv1a64(to_json_string()); }

std::vector<ModuleLayout> module_layouts(const NetworkConfig& config) {
    std::vector<ModuleLayout> out;
    std::size_t channels = config.stem_channels;
    for (const auto& stage : config.stages) {
        for (std::size_t b = 0; b < stage.blocks; ++b) {
            out.push_back({channels, stage.channels, b == 0 ? stage.stride : 1});
            channels = stage.channels;
        }
    }
    return out;
}

std::vector<Shape> module_output_shapes(const NetworkConfig& config, std::size_t n, std::size_t h,
                                        std::size_t w) {
    const std::size_t pad = (config.stem_kernel - 1) / 2;
    h = (h + 2 * pad - config.stem_kernel) / config.stem_stride + 1;
    w = (w + 2 * pad - config.stem_kernel) / config.stem_stride + 1;
    std::vector<Shape> out;
    for (const auto& m : module_layouts(config)) {
        // 3x3 pad 1 stride s
        h = (h + 2 - 3) / m.stride + 1;
        w = (w + 2 - 3) / m.stride + 1;
        out.push_back({n, m.out_channels, h, w});
    }
    return out;
}

// ---------------------------------------------------------------------------

std::size_t ParamStore::add(std::string name, Tensor value, ParamKind kind) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
    index_.emplace(name, params_.size());
    params_.push_back(Param{std::move(name), std::move(value), kind, false});
    return params_.size() - 1;
}

std::optional<std::size_t> ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Param& ParamStore::at(const std::string& name) {
    auto i = find(name);
    if (!i) throw std::out_of_range("ParamStore: no parameter named " + name);
    return params_[*i];
}

const Param& ParamStore::at(const std::string& name) const {
    auto i = find(name);
    if (!i) throw std::out_of_range("ParamStore: no parameter named " + name);
    return params_[*i];
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        if (p.trainable()) n += p.value.size();
    }
    return n;
}

bool ParamStore::operator==(const ParamStore& other) const {
    if (params_.size() != other.params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const Param& a = params_[i];
        const Param& b = other.params_[i];
        if (a.name != b.name || a.kind != b.kind || a.frozen != b.frozen || !(a.value == b.value)) {
            return false;
        }
    }
    return true;
}

namespace {

class Initializer {
public:
    Initializer(ParamStore& store, std::uint64_t seed) : store_(store), rng_(seed) {}

    void conv(const std::string& name, const ConvSpec& spec) {
        Tensor w(spec.weight_shape());
        const double bound =
            std::sqrt(6.0 / static_cast<double>(spec.in_channels * spec.kernel_h * spec.kernel_w));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : w.data()) v = dist(rng_);
        store_.add(name + ".weight", std::move(w), ParamKind::conv_weight);
        if (spec.has_bias) store_.add(name + ".bias", Tensor::vector(spec.out_channels), ParamKind::bias);
    }

    void batchnorm(const std::string& name, std::size_t channels) {
        store_.add(name + ".gamma", Tensor::vector(channels, 1.0), ParamKind::bn_gamma);
        store_.add(name + ".beta", Tensor::vector(channels, 0.0), ParamKind::bn_beta);
        store_.add(name + ".running_mean", Tensor::vector(channels, 0.0), ParamKind::running_mean);
        store_.add(name + ".running_var", Tensor::vector(channels, 1.0), ParamKind::running_var);
    }

    void llam(const std::string& name, std::size_t channels, std::size_t kernel) {
        LlamParams p = llam_init(channels, kernel, rng_);
        store_.add(name + ".weight", std::move(p.weight), ParamKind::conv_weight);
        store_.add(name + ".bias", std::move(p.bias), ParamKind::bias);
    }

    void linear(const std::string& name, std::size_t out, std::size_t in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Tensor w = Tensor::matrix(out, in);
        for (double& v : w.data()) v = dist(rng_);
        store_.add(name + ".weight", std::move(w), ParamKind::linear_weight);
        store_.add(name + ".bias", Tensor::vector(out), ParamKind::bias);
    }

private:
    ParamStore& store_;
    std::mt19937_64 rng_;
};

ConvSpec conv3x3(std::size_t in, std::size_t out, std::size_t stride) {
    return ConvSpec{out, in, 3, 3, stride, 1, false};
}

ConvSpec conv1x1(std::size_t in, std::size_t out, std::size_t stride, bool bias) {
    return ConvSpec{out, in, 1, 1, stride, 0, bias};
}

ConvSpec stem_spec(const NetworkConfig& c) {
    return ConvSpec{c.stem_channels, c.in_channels, c.stem_kernel, c.stem_kernel, c.stem_stride,
                    (c.stem_kernel - 1) / 2, false};
}

std::string module_prefix(std::size_t i) { return "modules." + std::to_string(i); }

}  // namespace

ParamStore init_network(const NetworkConfig& config) {
    config.validate();
    ParamStore store;
    Initializer init(store, config.seed);
    init.conv("stem.conv", stem_spec(config));
    init.batchnorm("stem.bn", config.stem_channels);
    const auto layouts = module_layouts(config);
    for (std::size_t i = 0; i < layouts.size(); ++i) {
        const ModuleLayout& m = layouts[i];
        const std::string p = module_prefix(i);
        init.conv(p + ".block.conv1", conv3x3(m.in_channels, m.out_channels, m.stride));
        init.batchnorm(p + ".block.bn1", m.out_channels);
        init.conv(p + ".block.conv2", conv3x3(m.out_channels, m.out_channels, 1));
        init.batchnorm(p + ".block.bn2", m.out_channels);
        if (m.projects()) {
            init.conv(p + ".block.shortcut.conv", conv1x1(m.in_channels, m.out_channels, m.stride, false));
            init.batchnorm(p + ".block.shortcut.bn", m.out_channels);
        }
        if (config.use_llam) {
            if (m.projects()) init.conv(p + ".align", conv1x1(m.in_channels, m.out_channels, m.stride, true));
            init.llam(p + ".llam", m.out_channels, config.llam_kernel);
        }
    }
    init.linear("head", config.classes, layouts.back().out_channels);
    return store;
}

void freeze_llam_at_zero(ParamStore& params) {
    for (Param& p : params) {
        if (p.name.find(".llam.") != std::string::npos) {
            p.value.fill(0.0);
            p.frozen = true;
        }
    }
}

// ---------------------------------------------------------------------------

BoundParams::BoundParams(ad::Tape& tape, ParamStore& store, bool track_grads)
    : store_(store), vars_(store.size()) {
    for (std::size_t i = 0; i < store.size(); ++i) {
        const Param& p = store[i];
        if (!p.trainable()) continue;
        vars_[i] = tape.leaf(p.value, track_grads && !p.frozen);
    }
}

BoundParams::BoundParams(ParamStore& store, std::span<const ad::Var> trainable)
    : store_(store), vars_(store.size()) {
    std::size_t next = 0;
    for (std::size_t i = 0; i < store.size(); ++i) {
        if (!store[i].trainable()) continue;
        if (next == trainable.size()) throw std::invalid_argument("BoundParams: too few leaves for store");
        vars_[i] = trainable[next++];
    }
    if (next != trainable.size()) throw std::invalid_argument("BoundParams: too many leaves for store");
}

ad::Var BoundParams::var(const std::string& name) const {
    auto i = store_.find(name);
    if (!i || !vars_[*i]) throw std::out_of_range("BoundParams: no bound parameter " + name);
    return *vars_[*i];
}

RunningStats BoundParams::stats(const std::string& prefix) {
    return RunningStats{store_.at(prefix + ".running_mean").value.data(),
                        store_.at(prefix + ".running_var").value.data()};
}

namespace {

ad::Var batchnorm(ad::Tape& tape, BoundParams& params, const std::string& name, ad::Var x, Mode mode) {
    return ad::batchnorm2d(tape, x, params.var(name + ".gamma"), params.var(name + ".beta"),
                           params.stats(name), mode);
}

ad::Var basic_block(ad::Tape& tape, BoundParams& params, const std::string& p, const ModuleLayout& m,
                    ad::Var x, Mode mode) {
    ad::Var y = ad::conv2d(tape, x, params.var(p + ".conv1.weight"), conv3x3(m.in_channels, m.out_channels, m.stride));
    y = ad::relu(tape, batchnorm(tape, params, p + ".bn1", y, mode));
    y = ad::conv2d(tape, y, params.var(p + ".conv2.weight"), conv3x3(m.out_channels, m.out_channels, 1));
    y = batchnorm(tape, params, p + ".bn2", y, mode);
    ad::Var shortcut = x;
    if (m.projects()) {
        shortcut = ad::conv2d(tape, x, params.var(p + ".shortcut.conv.weight"),
                              conv1x1(m.in_channels, m.out_channels, m.stride, false));
        shortcut = batchnorm(tape, params, p + ".shortcut.bn", shortcut, mode);
    }
    return ad::relu(tape, ad::add(tape, y, shortcut));
}

}  // namespace

ModuleTrace combined_module_forward(ad::Tape& tape, BoundParams& params, const NetworkConfig& config,
                                    std::size_t index, ad::Var f_in, ad::Var f_prev_out, Mode mode) {
    const auto layouts = module_layouts(config);
    if (index >= layouts.size()) {
        throw std::out_of_range("combined module index " + std::to_string(index) + " out of range");
    }
    const ModuleLayout& m = layouts[index];
    const std::string p = module_prefix(index);
    ModuleTrace t;
    t.index = index;
    t.f_in = f_in;
    t.f_prev_out = f_prev_out;
    t.f_cur = basic_block(tape, params, p + ".block", m, f_in, mode);
    if (!config.use_llam) {
        t.f_pre = f_prev_out;
        t.output = t.f_cur;
        return t;
    }
    t.f_pre = f_prev_out;
    if (tape.value(f_prev_out).shape() != tape.value(t.f_cur).shape()) {
        const Shape& prev = tape.value(f_prev_out).shape();
        if (!m.projects() || prev.c != m.in_channels) {
            throw DimensionError("c", "combined module " + std::to_string(index) + ": F_pre " + prev.str() +
                                          " cannot be aligned to " + tape.value(t.f_cur).shape().str());
        }
        t.f_pre = ad::conv2d(tape, f_prev_out, params.var(p + ".align.weight"), params.var(p + ".align.bias"),
                             conv1x1(m.in_channels, m.out_channels, m.stride, true));
    }
    ad::LlamVars l = ad::llam_forward(tape, t.f_pre, t.f_cur, params.var(p + ".llam.weight"),
                                      params.var(p + ".llam.bias"), config.llam_kernel);
    t.attention = l.attention;
    t.output = l.refined;
    return t;
}

NetworkTrace network_forward(ad::Tape& tape, ad::Var batch, BoundParams& params, const NetworkConfig& config,
                             Mode mode) {
    const Shape& in = tape.value(batch).shape();
    if (in.c != config.in_channels) {
        throw DimensionError("c", "network: batch has " + std::to_string(in.c) + " channels, config expects " +
                                      std::to_string(config.in_channels));
    }
    NetworkTrace trace;
    ad::Var x = ad::conv2d(tape, batch, params.var("stem.conv.weight"), stem_spec(config));
    x = ad::relu(tape, batchnorm(tape, params, "stem.bn", x, mode));
    trace.stem_out = x;
    const std::size_t count = config.module_count();
    for (std::size_t i = 0; i < count; ++i) {
        ModuleTrace m = combined_module_forward(tape, params, config, i, x, x, mode);
        x = m.output;
        trace.modules.push_back(m);
    }
    ad::Var pooled = ad::global_avg_pool(tape, x);
    trace.logits = ad::linear(tape, pooled, params.var("head.weight"), params.var("head.bias"));
    return trace;
}

Tensor predict_logits(const Tensor& batch, ParamStore& params, const NetworkConfig& config) {
    ad::Tape tape;
    BoundParams bound(tape, params, false);
    NetworkTrace t = network_forward(tape, tape.constant(batch), bound, config, Mode::eval);
    return tape.value(t.logits);
}

std::vector<Tensor> attention_maps(const Tensor& batch, ParamStore& params, const NetworkConfig& config) {
    ad::Tape tape;
    BoundParams bound(tape, params, false);
    NetworkTrace t = network_forward(tape, tape.constant(batch), bound, config, Mode::eval);
    std::vector<Tensor> out;
    for (const auto& m : t.modules) {
        if (m.attention) out.push_back(tape.value(*m.attention));
    }
    return out;
}

}  // namespace lla
