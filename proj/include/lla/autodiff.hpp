#pragma once

// Tape-based reverse-mode differentiation over the kernels in tensor.hpp.
//
// Every op appends one node holding its forward value and an adjoint closure.
// Nodes are only ever appended, so creation order is a topological order and
// backward() is a single reverse sweep.

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "lla/tensor.hpp"

namespace lla::ad {

/// Differentiable kernels with a registered adjoint.
enum class Kernel {
    conv2d,
    batchnorm2d,
    relu,
    sigmoid,
    concat_channels,
    hadamard,
    add,
    max_pool,
    global_avg_pool,
    linear,
    softmax_cross_entropy,
    sum,
    scale,
};

std::span<const Kernel> all_kernels();
std::string_view kernel_name(Kernel k);

/// Handle to a tape node.
struct Var {
    std::size_t id = 0;
};

/// Gradients keyed by leaf. Every trainable leaf of the tape has an entry;
/// leaves the loss does not depend on hold zeros.
class GradMap {
public:
    bool contains(Var v) const { return grads_.count(v.id) != 0; }
    const Tensor& operator[](Var v) const;
    std::size_t size() const { return grads_.size(); }

    void set(Var v, Tensor g) { grads_[v.id] = std::move(g); }

private:
    std::map<std::size_t, Tensor> grads_;
};

class Tape {
public:
    /// Adds `grad_out` contributions to the inputs' gradients. Entries of
    /// `grad_inputs` are null for inputs that do not require a gradient.
    using Adjoint = std::function<void(const Tape& tape, const Tensor& grad_out,
                                       std::span<Tensor* const> grad_inputs)>;

    Var leaf(Tensor value, bool requires_grad = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    Var record(Kernel kernel, std::vector<Var> inputs, Tensor value, Adjoint adjoint);

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    bool is_leaf(Var v) const { return nodes_.at(v.id).leaf; }
    std::size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a scalar loss. Throws if `loss` is not 1x1x1x1.
    GradMap backward(Var loss) const;

private:
    struct Node {
        Kernel kernel{};
        bool leaf = false;
        bool requires_grad = false;
        std::vector<Var> inputs;
        Tensor value;
        Adjoint adjoint;
    };
    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Recorded ops. Each mirrors the tensor.hpp kernel of the same name.

Var conv2d(Tape& tape, Var input, Var weight, const ConvSpec& spec);
Var conv2d(Tape& tape, Var input, Var weight, Var bias, const ConvSpec& spec);

/// `stats` is written in train mode while recording; the adjoint does not read it.
Var batchnorm2d(Tape& tape, Var input, Var gamma, Var beta, RunningStats stats, Mode mode,
                const BatchNormOptions& opts = {});

Var relu(Tape& tape, Var x);
Var sigmoid(Tape& tape, Var x);
Var concat_channels(Tape& tape, Var a, Var b);
Var hadamard(Tape& tape, Var a, Var b);
Var add(Tape& tape, Var a, Var b);
Var max_pool(Tape& tape, Var x, std::size_t window, std::size_t stride);
Var global_avg_pool(Tape& tape, Var x);
Var linear(Tape& tape, Var input, Var weight, Var bias);
Var softmax_cross_entropy(Tape& tape, Var logits, std::vector<int> labels);
Var sum(Tape& tape, Var x);
Var scale(Tape& tape, Var x, double alpha);

}  // namespace lla::ad
