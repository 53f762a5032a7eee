#include "lla/autodiff.hpp"

#include <array>
#include <memory>
#include <stdexcept>
#include <string>

namespace lla::ad {

namespace {

constexpr std::array kKernels{
    Kernel::conv2d,  Kernel::batchnorm2d,    Kernel::relu,   Kernel::sigmoid,
    Kernel::concat_channels, Kernel::hadamard, Kernel::add, Kernel::max_pool,
    Kernel::global_avg_pool, Kernel::linear, Kernel::softmax_cross_entropy, Kernel::sum,
    Kernel::scale,
};

std::span<const double> values_of(const Tensor& t) { return t.data(); }

void add_vector(Tensor* dst, const std::vector<double>& src) {
    if (!dst) return;
    for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += src[i];
}

void add_tensor(Tensor* dst, const Tensor& src) {
    if (dst) accumulate(*dst, src);
}

}  // namespace

std::span<const Kernel> all_kernels() { return kKernels; }

std::string_view kernel_name(Kernel k) {
    switch (k) {
        case Kernel::conv2d: return "conv2d";
        case Kernel::batchnorm2d: return "batchnorm2d";
        case Kernel::relu: return "relu";
        case Kernel::sigmoid: return "sigmoid";
        case Kernel::concat_channels: return "concat_channels";
        case Kernel::hadamard: return "hadamard";
        case Kernel::add: return "add";
        case Kernel::max_pool: return "max_pool";
        case Kernel::global_avg_pool: return "global_avg_pool";
        case Kernel::linear: return "linear";
        case Kernel::softmax_cross_entropy: return "softmax_cross_entropy";
        case Kernel::sum: return "sum";
        case Kernel::scale: return "scale";
    }
    return "unknown";
}

const Tensor& GradMap::operator[](Var v) const {
    auto it = grads_.find(v.id);
    if (it == grads_.end()) {
        throw std::out_of_range("GradMap: node " + std::to_string(v.id) + " is not a trainable leaf");
    }
    return it->second;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node node;
    node.leaf = true;
    node.requires_grad = requires_grad;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Var Tape::record(Kernel kernel, std::vector<Var> inputs, Tensor value, Adjoint adjoint) {
    Node node;
    node.kernel = kernel;
    for (Var v : inputs) {
        if (v.id >= nodes_.size()) throw std::out_of_range("Tape::record: dangling input");
        node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
    }
    node.inputs = std::move(inputs);
    node.value = std::move(value);
    node.adjoint = std::move(adjoint);
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

GradMap Tape::backward(Var loss) const {
    if (loss.id >= nodes_.size()) throw std::out_of_range("Tape::backward: unknown loss node");
    if (nodes_[loss.id].value.shape() != Shape{1, 1, 1, 1}) {
        throw DimensionError("shape", "Tape::backward: loss must be scalar, got " +
                                          nodes_[loss.id].value.shape().str());
    }
    std::vector<Tensor> grads(loss.id + 1);
    grads[loss.id] = Tensor::scalar(1.0);
    std::vector<Tensor*> slots;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        const Node& node = nodes_[i];
        if (node.leaf || !node.requires_grad || grads[i].empty()) continue;
        slots.assign(node.inputs.size(), nullptr);
        for (std::size_t j = 0; j < node.inputs.size(); ++j) {
            const std::size_t in = node.inputs[j].id;
            if (!nodes_[in].requires_grad) continue;
            if (grads[in].empty()) grads[in] = Tensor(nodes_[in].value.shape());
            slots[j] = &grads[in];
        }
        node.adjoint(*this, grads[i], slots);
    }
    GradMap out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& node = nodes_[i];
        if (!node.leaf || !node.requires_grad) continue;
        if (i < grads.size() && !grads[i].empty()) {
            out.set(Var{i}, std::move(grads[i]));
        } else {
            out.set(Var{i}, Tensor(node.value.shape()));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

Var conv2d(Tape& tape, Var input, Var weight, const ConvSpec& spec) {
    if (spec.has_bias) throw std::invalid_argument("ad::conv2d: spec has bias but none given");
    Tensor y = lla::conv2d(tape.value(input), tape.value(weight), {}, spec);
    return tape.record(Kernel::conv2d, {input, weight}, std::move(y),
                       [input, weight, spec](const Tape& t, const Tensor& g, std::span<Tensor* const> d) {
                           ConvGrads cg = conv2d_backward(t.value(input), t.value(weight), g, spec);
                           add_tensor(d[0], cg.input);
                           add_tensor(d[1], cg.weight);
                       });
}

Var conv2d(Tape& tape, Var input, Var weight, Var bias, const ConvSpec& spec) {
    if (!spec.has_bias) throw std::invalid_argument("ad::conv2d: bias given but spec has none");
    Tensor y = lla::conv2d(tape.value(input), tape.value(weight), values_of(tape.value(bias)), spec);
    return tape.record(Kernel::conv2d, {input, weight, bias}, std::move(y),
                       [input, weight, spec](const Tape& t, const Tensor& g, std::span<Tensor* const> d) {
                           ConvGrads cg = conv2d_backward(t.value(input), t.value(weight), g, spec);
                           add_tensor(d[0], cg.input);
                           add_tensor(d[1], cg.weight);
                           add_vector(d[2], cg.bias);
                       });
}

Var batchnorm2d(Tape& tape, Var input, Var gamma, Var beta, RunningStats stats, Mode mode,
                const BatchNormOptions& opts) {
    auto cache = std::make_shared<BatchNormCache>();
    Tensor y = lla::batchnorm2d(tape.value(input), values_of(tape.value(gamma)),
                                values_of(tape.value(beta)), stats, mode, opts, cache.get());
    return tape.record(Kernel::batchnorm2d, {input, gamma, beta}, std::move(y),
                       [input, gamma, cache](const Tape& t, const Tensor& g, std::span<Tensor* const> d) {
                           BatchNormGrads bg = batchnorm2d_backward(
                               t.value(input), values_of(t.value(gamma)), *cache, g);
                           add_tensor(d[0], bg.input);
                           add_vector(d[1], bg.gamma);
                           add_vector(d[2], bg.beta);
                       });
}

namespace {

Var activation_op(Tape& tape, Var x, Activation kind, Kernel kernel) {
    Tensor y = lla::activation(tape.value(x), kind);
    const std::size_t self = tape.size();
    return tape.record(kernel, {x}, std::move(y),
                       [self, kind](const Tape& t, const Tensor& g, std::span<Tensor* const> d) {
                           add_tensor(d[0], activation_backward(t.value(Var{self}), g, kind));
                       });
}

}  // namespace

Var relu(Tape& tape, Var x) { return activation_op(tape, x, Activation::relu, Kernel::relu); }

Var sigmoid(Tape& tape, Var x) {
    return activation_op(tape, x, Activation::sigmoid, Kernel::sigmoid);
}

Var concat_channels(Tape& tape, Var a, Var b) {
    Tensor y = lla::concat_channels(tape.value(a), tape.value(b));
    const std::size_t split = tape.value(a).shape().c;
    return tape.record(Kernel::concat_channels, {a, b}, std::move(y),
                       [split](const Tape&, const Tensor& g, std::span<Tensor* const> d) {
                           if (d[0]) accumulate(*d[0], slice_channels(g, 0, split));
                           if (d[1]) accumulate(*d[1], slice_channels(g, split, g.shape().c));
                       });
}

Var hadamard(Tape& tape, Var a, Var b) {
    Tensor y = lla::hadamard(tape.value(a), tape.value(b));
    return tape.record(Kernel::hadamard, {a, b}, std::move(y),
                       [a, b](const Tape& t, const Tensor& g, std::span<Tensor* const> d) {
                           if (d[0]) accumulate(*d[0], lla::hadamard(g, t.value(b)));
                           if (d[1]) accumulate(*d[1], lla::hadamard(g, t.value(a)));
                       });
}

Var add(Tape& tape, Var a, Var b) {
    Tensor y = lla::add(tape.value(a), tape.value(b));
    return tape.record(Kernel::add, {a, b}, std::move(y),
                       [](const Tape&, const Tensor& g, std::span<Tensor* const> d) {
                           add_tensor(d[0], g);
                           add_tensor(d[1], g);
                       });
}

Var max_pool(Tape& tape, Var x, std::size_t window, std::size_t stride) {
    Tensor y = pool2d(tape.value(x), PoolKind::max, window, stride);
    return tape.record(Kernel::max_pool, {x}, std::move(y),
                       [x, window, stride](const Tape& t, const Tensor& g, std::span<Tensor* const> d) {
                           add_tensor(d[0], pool2d_backward(t.value(x), g, PoolKind::max, window, stride));
                       });
}

Var global_avg_pool(Tape& tape, Var x) {
    Tensor y = pool2d(tape.value(x), PoolKind::global_avg);
    return tape.record(Kernel::global_avg_pool, {x}, std::move(y),
                       [x](const Tape& t, const Tensor& g, std::span<Tensor* const> d) {
                           add_tensor(d[0], pool2d_backward(t.value(x), g, PoolKind::global_avg));
                       });
}

Var linear(Tape& tape, Var input, Var weight, Var bias) {
    Tensor y = lla::linear(tape.value(input), tape.value(weight), values_of(tape.value(bias)));
    return tape.record(Kernel::linear, {input, weight, bias}, std::move(y),
                       [input, weight](const Tape& t, const Tensor& g, std::span<Tensor* const> d) {
                           LinearGrads lg = linear_backward(t.value(input), t.value(weight), g);
                           add_tensor(d[0], lg.input);
                           add_tensor(d[1], lg.weight);
                           add_vector(d[2], lg.bias);
                       });
}

Var softmax_cross_entropy(Tape& tape, Var logits, std::vector<int> labels) {
    CrossEntropy ce = lla::softmax_cross_entropy(tape.value(logits), labels);
    auto probs = std::make_shared<Tensor>(std::move(ce.probabilities));
    return tape.record(Kernel::softmax_cross_entropy, {logits}, Tensor::scalar(ce.loss),
                       [probs, labels = std::move(labels)](const Tape&, const Tensor& g,
                                                           std::span<Tensor* const> d) {
                           if (!d[0]) return;
                           accumulate(*d[0], lla::scale(softmax_cross_entropy_backward(*probs, labels), g[0]));
                       });
}

Var sum(Tape& tape, Var x) {
    return tape.record(Kernel::sum, {x}, Tensor::scalar(tape.value(x).sum()),
                       [](const Tape&, const Tensor& g, std::span<Tensor* const> d) {
                           if (!d[0]) return;
                           for (double& v : d[0]->data()) v += g[0];
                       });
}

Var scale(Tape& tape, Var x, double alpha) {
    Tensor y = lla::scale(tape.value(x), alpha);
    return tape.record(Kernel::scale, {x}, std::move(y),
                       [alpha](const Tape&, const Tensor& g, std::span<Tensor* const> d) {
                           if (d[0]) accumulate(*d[0], lla::scale(g, alpha));
                       });
}

}  // namespace lla::ad
