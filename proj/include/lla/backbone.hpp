#pragma once

// LLA-Net: stem -> [BasicBlock -> LLAM] x N -> global average pool -> linear.
//
// Each combined module feeds its own input (the previous module's refined
// output, or the stem output for module 0) to LLAM as F_pre. When the block
// changes channels or stride, F_pre is first projected to the block's output
// shape by a learned 1x1 convolution ("align").

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lla/autodiff.hpp"
#include "lla/tensor.hpp"

namespace lla {

struct StageSpec {
    std::size_t blocks = 1;
    std::size_t channels = 64;
    std::size_t stride = 1;
    bool operator==(const StageSpec&) const = default;
};

struct NetworkConfig {
    std::string preset = "custom";
    std::size_t in_channels = 3;
    std::size_t in_h = 112;
    std::size_t in_w = 112;
    std::size_t stem_channels = 64;
    std::size_t stem_kernel = 3;
    std::size_t stem_stride = 1;
    std::vector<StageSpec> stages;
    std::size_t llam_kernel = 3;
    std::size_t classes = 7;
    bool use_llam = true;
    std::uint64_t seed = 0;

    /// ResNet-18 sized: 64-channel stride-1 stem, [2,2,2,2] blocks at [64,128,256,512].
    static NetworkConfig paper();
    /// Stem 8, stages [1,1] at [8,16], 3x32x32 input.
    static NetworkConfig tiny();
    /// Stem 4 plus one width-4 combined module on 3x8x8 input; sized for gradient checks.
    static NetworkConfig micro();
    /// Looks up one of the presets above by name.
    static NetworkConfig from_preset(const std::string& name);

    /// Throws ConfigError.
    void validate() const;
    std::size_t module_count() const;
    /// Stable FNV-1a digest of the canonical JSON form. Covers the layout
    /// only, so a checkpoint stays loadable under a different seed.
    std::uint64_t digest() const;
    /// Canonical architecture JSON (the seed is not part of it).
    std::string to_json_string() const;

    bool operator==(const NetworkConfig&) const = default;
};

/// Static geometry of one combined module.
struct ModuleLayout {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t stride = 1;
    bool projects() const { return stride != 1 || in_channels != out_channels; }
};

std::vector<ModuleLayout> module_layouts(const NetworkConfig& config);

/// Shape of each combined module's output for a batch of n, from stride arithmetic.
std::vector<Shape> module_output_shapes(const NetworkConfig& config, std::size_t n,
                                        std::size_t h, std::size_t w);

// ---------------------------------------------------------------------------

enum class ParamKind { conv_weight, linear_weight, bias, bn_gamma, bn_beta, running_mean, running_var };

struct Param {
    std::string name;
    Tensor value;
    ParamKind kind = ParamKind::conv_weight;
    bool frozen = false;

    bool trainable() const { return kind != ParamKind::running_mean && kind != ParamKind::running_var; }
    bool is_weight() const { return kind == ParamKind::conv_weight || kind == ParamKind::linear_weight; }
};

/// Named parameters and batch-norm buffers in deterministic creation order.
class ParamStore {
public:
    std::size_t add(std::string name, Tensor value, ParamKind kind);

    std::size_t size() const { return params_.size(); }
    Param& operator[](std::size_t i) { return params_[i]; }
    const Param& operator[](std::size_t i) const { return params_[i]; }
    std::optional<std::size_t> find(const std::string& name) const;
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    /// Scalar count over trainable entries (buffers excluded).
    std::size_t parameter_count() const;

    bool operator==(const ParamStore& other) const;

private:
    std::vector<Param> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

ParamStore init_network(const NetworkConfig& config);

/// Zeroes every LLAM weight and bias and marks them frozen (M == 0.5 everywhere).
void freeze_llam_at_zero(ParamStore& params);

// ---------------------------------------------------------------------------

/// Tape leaves for a ParamStore. Trainable unfrozen entries require gradients,
/// frozen ones are constants, running stats stay off the tape.
class BoundParams {
public:
    BoundParams(ad::Tape& tape, ParamStore& store, bool track_grads = true);
    /// Uses caller-made leaves, one per trainable entry in store order.
    BoundParams(ParamStore& store, std::span<const ad::Var> trainable);

    ad::Var var(const std::string& name) const;
    RunningStats stats(const std::string& prefix);
    /// Leaf for store entry i, if it was bound.
    std::optional<ad::Var> var_at(std::size_t i) const { return vars_[i]; }
    ParamStore& store() { return store_; }

private:
    ParamStore& store_;
    std::vector<std::optional<ad::Var>> vars_;
};

struct ModuleTrace {
    std::size_t index = 0;
    ad::Var f_in;
    ad::Var f_prev_out;
    ad::Var f_pre;      // after alignment
    ad::Var f_cur;      // BasicBlock output
    std::optional<ad::Var> attention;
    ad::Var output;
};

/// One BasicBlock followed by LLAM (or the bare block when LLAM is disabled).
ModuleTrace combined_module_forward(ad::Tape& tape, BoundParams& params, const NetworkConfig& config,
                                    std::size_t index, ad::Var f_in, ad::Var f_prev_out, Mode mode);

struct NetworkTrace {
    ad::Var logits;
    ad::Var stem_out;
    std::vector<ModuleTrace> modules;
};

/// Logits (n, K, 1, 1). Train mode normalizes with batch statistics and updates
/// the running buffers in `params.store()`.
NetworkTrace network_forward(ad::Tape& tape, ad::Var batch, BoundParams& params,
                             const NetworkConfig& config, Mode mode);

/// Eval-mode logits without gradient bookkeeping by the caller.
Tensor predict_logits(const Tensor& batch, ParamStore& params, const NetworkConfig& config);

/// Eval-mode attention maps M of every combined module.
std::vector<Tensor> attention_maps(const Tensor& batch, ParamStore& params, const NetworkConfig& config);

}  // namespace lla
