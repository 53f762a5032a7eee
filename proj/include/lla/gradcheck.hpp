#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lla/autodiff.hpp"

namespace lla::ad {

/// Builds a scalar-valued program on `tape` from leaves bound to `params`.
using Program = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t param = 0;    // location of the worst element
    std::size_t element = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    bool finite = true;       // false if either side produced NaN/Inf
    std::size_t elements_checked = 0;

    bool passed(double tolerance) const { return finite && max_relative_error < tolerance; }
    std::string location() const;
};

/// |a - b| / max(1e-12, |a| + |b|)
double relative_error(double a, double b);

/// Compares reverse-mode gradients of `fn` against central differences
/// (f(x + eps) - f(x - eps)) / (2 eps) for every element of every parameter.
/// ReLU is not differentiable at 0: programs containing it should keep their
/// pre-activations away from 0 by more than eps (the kernel suite uses |x| > 0.1).
GradCheckReport grad_check(const Program& fn, std::vector<Tensor> params, double eps = 1e-5);

/// sum(x * weights) with constant weights; turns any tensor into a scalar loss
/// whose gradient is not degenerate (a plain sum of a batch-norm output is constant).
Var weighted_sum(Tape& tape, Var x, const Tensor& weights);

struct KernelCheck {
    Kernel kernel;
    std::string name;
    Program program;
    std::vector<Tensor> params;
};

/// One deterministic check program per entry of all_kernels().
std::vector<KernelCheck> kernel_checks(std::uint64_t seed = 7);

}  // namespace lla::ad
