#include "lla/llam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lla {

namespace {

void check_pair(const Shape& pre, const Shape& cur) {
    if (pre.n != cur.n) throw DimensionError("n", "llam: F_pre " + pre.str() + " vs F_cur " + cur.str());
    if (pre.c != cur.c) throw DimensionError("c", "llam: F_pre " + pre.str() + " vs F_cur " + cur.str());
    if (pre.h != cur.h) throw DimensionError("h", "llam: F_pre " + pre.str() + " vs F_cur " + cur.str());
    if (pre.w != cur.w) throw DimensionError("w", "llam: F_pre " + pre.str() + " vs F_cur " + cur.str());
}

void check_kernel(std::size_t kernel) {
    if (kernel == 0 || kernel % 2 == 0) {
        throw std::invalid_argument("llam: kernel size must be odd, got " + std::to_string(kernel));
    }
}

}  // namespace

ConvSpec llam_conv_spec(std::size_t channels, std::size_t kernel) {
    check_kernel(kernel);
    return ConvSpec{channels, 2 * channels, kernel, kernel, 1, (kernel - 1) / 2, true};
}

ConvSpec LlamParams::conv_spec() const { return llam_conv_spec(channels(), kernel); }

void LlamParams::validate() const {
    check_kernel(kernel);
    const Shape& s = weight.shape();
    if (s.c != 2 * s.n) {
        throw DimensionError("c", "llam: weight " + s.str() + " must map 2C channels to C");
    }
    if (s.h != kernel || s.w != kernel) {
        throw DimensionError("kernel", "llam: weight " + s.str() + " does not match kernel " +
                                           std::to_string(kernel));
    }
    if (bias.size() != s.n) {
        throw DimensionError("bias", "llam: bias has " + std::to_string(bias.size()) +
                                         " entries, expected " + std::to_string(s.n));
    }
}

LlamOutput llam_forward(const Tensor& f_pre, const Tensor& f_cur, const LlamParams& params) {
    params.validate();
    check_pair(f_pre.shape(), f_cur.shape());
    if (f_cur.shape().c != params.channels()) {
        throw DimensionError("c", "llam: features have " + std::to_string(f_cur.shape().c) +
                                      " channels, params expect " + std::to_string(params.channels()));
    }
    Tensor stacked = concat_channels(f_pre, f_cur);
    Tensor attention = activation(conv2d(stacked, params.weight, params.bias.data(), params.conv_spec()),
                                  Activation::sigmoid);
    Tensor refined = hadamard(f_cur, attention);
    return {std::move(refined), std::move(attention)};
}

LlamParams llam_init(std::size_t channels, std::size_t kernel, std::mt19937_64& rng) {
    if (channels < 1) throw std::invalid_argument("llam_init: channels must be >= 1");
    const ConvSpec spec = llam_conv_spec(channels, kernel);
    const double fan_in = static_cast<double>(spec.in_channels * kernel * kernel);
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    LlamParams p{Tensor(spec.weight_shape()), Tensor::vector(channels), kernel};
    for (double& v : p.weight.data()) v = dist(rng);
    return p;
}

namespace ad {

LlamVars llam_forward(Tape& tape, Var f_pre, Var f_cur, Var weight, Var bias, std::size_t kernel) {
    check_pair(tape.value(f_pre).shape(), tape.value(f_cur).shape());
    const ConvSpec spec = llam_conv_spec(tape.value(f_cur).shape().c, kernel);
    Var stacked = concat_channels(tape, f_pre, f_cur);
    Var attention = sigmoid(tape, conv2d(tape, stacked, weight, bias, spec));
    Var refined = hadamard(tape, f_cur, attention);
    return {refined, attention};
}

}  // namespace ad

}  // namespace lla
