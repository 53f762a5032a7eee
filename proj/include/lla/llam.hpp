#pragma once

// Lossless attention: concatenate the previous and current feature maps,
// convolve the 2C-channel stack back to C channels, squash with a sigmoid to
// get a full C x H x W attention map, and gate the current map with it.
//
//   F_cat = [F_pre : F_cur]
//   M     = sigmoid(conv(F_cat))
//   F'    = F_cur * M          (elementwise)

#include <cstddef>
#include <random>

#include "lla/autodiff.hpp"
#include "lla/tensor.hpp"

namespace lla {

struct LlamParams {
    Tensor weight;  // (C, 2C, k, k)
    Tensor bias;    // (C, 1, 1, 1)
    std::size_t kernel = 3;

    std::size_t channels() const { return weight.shape().n; }
    /// Stride 1, padding (k - 1) / 2, so spatial dims are preserved.
    ConvSpec conv_spec() const;
    /// Throws unless weight is (C, 2C, k, k) with odd k and bias has C entries.
    void validate() const;
};

ConvSpec llam_conv_spec(std::size_t channels, std::size_t kernel);

struct LlamOutput {
    Tensor refined;    // F'
    Tensor attention;  // M, every element in (0, 1)
};

/// f_pre and f_cur must both be (n, C, H, W).
LlamOutput llam_forward(const Tensor& f_pre, const Tensor& f_cur, const LlamParams& params);

/// Kaiming-uniform weights with bound sqrt(6 / (2C k k)); zero bias. Even k is rejected.
LlamParams llam_init(std::size_t channels, std::size_t kernel, std::mt19937_64& rng);

namespace ad {

struct LlamVars {
    Var refined;
    Var attention;
};

/// Recorded version; weight and bias are tape leaves (or constants).
LlamVars llam_forward(Tape& tape, Var f_pre, Var f_cur, Var weight, Var bias, std::size_t kernel);

}  // namespace ad

}  // namespace lla
