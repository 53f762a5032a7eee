#include "lla/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>

namespace lla::ad {

std::string GradCheckReport::location() const {
    std::ostringstream os;
    os << "param " << param << " element " << element << " (analytic " << analytic << ", numeric "
       << numeric << ")";
    return os.str();
}

double relative_error(double a, double b) {
    return std::abs(a - b) / std::max(1e-12, std::abs(a) + std::abs(b));
}

namespace {

double evaluate(const Program& fn, const std::vector<Tensor>& params) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Tensor& p : params) vars.push_back(tape.leaf(p));
    Var out = fn(tape, vars);
    const Tensor& v = tape.value(out);
    if (v.shape() != Shape{1, 1, 1, 1}) {
        throw DimensionError("shape", "grad_check: program must return a scalar, got " + v.shape().str());
    }
    return v[0];
}

}  // namespace

GradCheckReport grad_check(const Program& fn, std::vector<Tensor> params, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
    GradCheckReport report;

    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : params) vars.push_back(tape.leaf(p));
    GradMap grads = tape.backward(fn(tape, vars));

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const Tensor& analytic = grads[vars[pi]];
        for (std::size_t e = 0; e < params[pi].size(); ++e) {
            const double saved = params[pi][e];
            params[pi][e] = saved + eps;
            const double up = evaluate(fn, params);
            params[pi][e] = saved - eps;
            const double down = evaluate(fn, params);
            params[pi][e] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[e];
            ++report.elements_checked;
            if (!std::isfinite(a) || !std::isfinite(numeric)) {
                if (report.finite) {
                    report.finite = false;
                    report.param = pi;
                    report.element = e;
                    report.analytic = a;
                    report.numeric = numeric;
                }
                continue;
            }
            const double err = relative_error(a, numeric);
            if (report.finite && err > report.max_relative_error) {
                report.max_relative_error = err;
                report.param = pi;
                report.element = e;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    return report;
}

Var weighted_sum(Tape& tape, Var x, const Tensor& weights) {
    return sum(tape, hadamard(tape, x, tape.constant(weights)));
}

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(s);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

// Values bounded away from zero: |x| in [0.1, 1].
Tensor away_from_zero(Shape s, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mag(0.1, 1.0);
    std::bernoulli_distribution sign(0.5);
    Tensor t(s);
    for (double& v : t.data()) v = sign(rng) ? mag(rng) : -mag(rng);
    return t;
}

// Distinct values spaced 0.05 apart in random order, so argmax is stable under eps.
Tensor distinct_values(Shape s, std::mt19937_64& rng) {
    std::vector<double> vals(s.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = -1.0 + 0.05 * static_cast<double>(i);
    std::shuffle(vals.begin(), vals.end(), rng);
    return Tensor(s, std::move(vals));
}

}  // namespace

std::vector<KernelCheck> kernel_checks(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<KernelCheck> checks;
    auto add_check = [&](Kernel k, Program p, std::vector<Tensor> params) {
        checks.push_back({k, std::string(kernel_name(k)), std::move(p), std::move(params)});
    };

    {
        ConvSpec spec{4, 3, 3, 3, 2, 1, true};
        Tensor r = random_tensor(spec.output_shape({2, 3, 5, 5}), rng);
        add_check(Kernel::conv2d,
                  [spec, r](Tape& t, std::span<const Var> p) {
                      return weighted_sum(t, conv2d(t, p[0], p[1], p[2], spec), r);
                  },
                  {random_tensor({2, 3, 5, 5}, rng), random_tensor(spec.weight_shape(), rng),
                   random_tensor({4, 1, 1, 1}, rng)});
    }
    {
        const Shape s{3, 2, 3, 3};
        Tensor r = random_tensor(s, rng);
        auto mean = std::make_shared<std::vector<double>>(s.c, 0.0);
        auto var = std::make_shared<std::vector<double>>(s.c, 1.0);
        add_check(Kernel::batchnorm2d,
                  [r, mean, var](Tape& t, std::span<const Var> p) {
                      Var y = batchnorm2d(t, p[0], p[1], p[2], RunningStats{*mean, *var}, Mode::train);
                      return weighted_sum(t, y, r);
                  },
                  {random_tensor(s, rng), random_tensor({2, 1, 1, 1}, rng, 0.5, 1.5),
                   random_tensor({2, 1, 1, 1}, rng)});
    }
    {
        const Shape s{2, 2, 3, 3};
        Tensor r = random_tensor(s, rng);
        add_check(Kernel::relu,
                  [r](Tape& t, std::span<const Var> p) { return weighted_sum(t, relu(t, p[0]), r); },
                  {away_from_zero(s, rng)});
    }
    {
        const Shape s{2, 2, 3, 3};
        Tensor r = random_tensor(s, rng);
        add_check(Kernel::sigmoid,
                  [r](Tape& t, std::span<const Var> p) { return weighted_sum(t, sigmoid(t, p[0]), r); },
                  {random_tensor(s, rng, -3.0, 3.0)});
    }
    {
        Tensor r = random_tensor({1, 5, 3, 3}, rng);
        add_check(Kernel::concat_channels,
                  [r](Tape& t, std::span<const Var> p) {
                      return weighted_sum(t, concat_channels(t, p[0], p[1]), r);
                  },
                  {random_tensor({1, 2, 3, 3}, rng), random_tensor({1, 3, 3, 3}, rng)});
    }
    {
        const Shape s{2, 2, 3, 3};
        Tensor r = random_tensor(s, rng);
        add_check(Kernel::hadamard,
                  [r](Tape& t, std::span<const Var> p) {
                      return weighted_sum(t, hadamard(t, p[0], p[1]), r);
                  },
                  {random_tensor(s, rng), random_tensor(s, rng)});
    }
    {
        const Shape s{2, 2, 3, 3};
        Tensor r = random_tensor(s, rng);
        add_check(Kernel::add,
                  [r](Tape& t, std::span<const Var> p) { return weighted_sum(t, add(t, p[0], p[1]), r); },
                  {random_tensor(s, rng), random_tensor(s, rng)});
    }
    {
        Tensor r = random_tensor({1, 2, 2, 2}, rng);
        add_check(Kernel::max_pool,
                  [r](Tape& t, std::span<const Var> p) {
                      return weighted_sum(t, max_pool(t, p[0], 2, 2), r);
                  },
                  {distinct_values({1, 2, 4, 4}, rng)});
    }
    {
        Tensor r = random_tensor({2, 3, 1, 1}, rng);
        add_check(Kernel::global_avg_pool,
                  [r](Tape& t, std::span<const Var> p) {
                      return weighted_sum(t, global_avg_pool(t, p[0]), r);
                  },
                  {random_tensor({2, 3, 4, 4}, rng)});
    }
    {
        Tensor r = random_tensor({3, 4, 1, 1}, rng);
        add_check(Kernel::linear,
                  [r](Tape& t, std::span<const Var> p) {
                      return weighted_sum(t, linear(t, p[0], p[1], p[2]), r);
                  },
                  {random_tensor({3, 5, 1, 1}, rng), random_tensor({4, 5, 1, 1}, rng),
                   random_tensor({4, 1, 1, 1}, rng)});
    }
    {
        std::vector<int> labels{3, 0};
        add_check(Kernel::softmax_cross_entropy,
                  [labels](Tape& t, std::span<const Var> p) {
                      return softmax_cross_entropy(t, p[0], labels);
                  },
                  {random_tensor({2, 7, 1, 1}, rng, -2.0, 2.0)});
    }
    add_check(Kernel::sum, [](Tape& t, std::span<const Var> p) { return sum(t, p[0]); },
              {random_tensor({2, 2, 2, 2}, rng)});
    {
        const Shape s{1, 2, 3, 3};
        Tensor r = random_tensor(s, rng);
        add_check(Kernel::scale,
                  [r](Tape& t, std::span<const Var> p) { return weighted_sum(t, scale(t, p[0], -1.7), r); },
                  {random_tensor(s, rng)});
    }
    return checks;
}

}  // namespace lla::ad
