#pragma once

// Finite-difference checks for composite programs: the LLAM block on its own
// and whole networks trained end to end through cross-entropy.

#include <cstdint>
#include <string>
#include <vector>

#include "lla/backbone.hpp"
#include "lla/gradcheck.hpp"

namespace lla {

struct ModelCheck {
    std::string name;
    ad::Program program;
    std::vector<Tensor> params;
};

/// Cross-entropy of `config` on a fixed random batch, differentiated with
/// respect to every trainable parameter (train-mode batch norm).
ModelCheck network_check(const NetworkConfig& config, std::size_t batch, std::uint64_t seed);

/// LLAM block over (f_pre, f_cur, weight, bias), then the micro network
/// (stem + one combined module, width 4) on a 1x3x8x8 input.
std::vector<ModelCheck> model_checks(std::uint64_t seed = 11);

}  // namespace lla
