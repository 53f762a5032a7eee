#include "lla/model_check.hpp"

#include <memory>
#include <random>

#include "lla/llam.hpp"

namespace lla {

namespace {

Tensor uniform(Shape s, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(s);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

}  // namespace

ModelCheck network_check(const NetworkConfig& config, std::size_t batch, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    auto store = std::make_shared<ParamStore>(init_network(config));
    // Move BN affine terms and biases off their init so the check is not at a special point.
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    std::vector<Tensor> params;
    for (const Param& p : *store) {
        if (!p.trainable()) continue;
        Tensor t = p.value;
        if (p.kind == ParamKind::bn_gamma || p.kind == ParamKind::bn_beta || p.kind == ParamKind::bias) {
            for (double& v : t.data()) v += jitter(rng);
        }
        params.push_back(std::move(t));
    }
    auto input = std::make_shared<Tensor>(uniform({batch, config.in_channels, config.in_h, config.in_w}, rng, -1, 1));
    std::vector<int> labels(batch);
    std::uniform_int_distribution<int> cls(0, static_cast<int>(config.classes) - 1);
    for (int& l : labels) l = cls(rng);

    ad::Program program = [config, store, input, labels](ad::Tape& tape, std::span<const ad::Var> vars) {
        BoundParams bound(*store, vars);
        NetworkTrace trace = network_forward(tape, tape.constant(*input), bound, config, Mode::train);
        return ad::softmax_cross_entropy(tape, trace.logits, labels);
    };
    return ModelCheck{"network_" + config.preset, std::move(program), std::move(params)};
}

std::vector<ModelCheck> model_checks(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<ModelCheck> checks;
    {
        const std::size_t c = 3;
        const Shape s{2, c, 5, 5};
        LlamParams init = llam_init(c, 3, rng);
        Tensor bias = uniform(init.bias.shape(), rng, -0.5, 0.5);
        Tensor r = uniform(s, rng, -1, 1);
        ad::Program program = [r](ad::Tape& t, std::span<const ad::Var> p) {
            return ad::weighted_sum(t, ad::llam_forward(t, p[0], p[1], p[2], p[3], 3).refined, r);
        };
        checks.push_back({"llam_block", std::move(program),
                          {uniform(s, rng, -1, 1), uniform(s, rng, -1, 1), init.weight, bias}});
    }
    checks.push_back(network_check(NetworkConfig::micro(), 1, rng()));
    return checks;
}

}  // namespace lla
