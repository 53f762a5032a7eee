// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fixtures.hpp"
#include "lla/autodiff.hpp"
#include "lla/checkpoint.hpp"
#include "lla/cli.hpp"
#include "lla/gradcheck.hpp"
#include "lla/llam.hpp"
#include "lla/manifest.hpp"
#include "lla/metrics.hpp"
#include "lla/model_check.hpp"
#include "lla/synthetic.hpp"
#include "lla/training.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace lla;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradEps = 1e-5;
constexpr double kGradBudgetSeconds = 60.0;
constexpr double kOracleTolerance = 1e-12;
constexpr int kOracleInstances = 100;
constexpr double kScoreTarget = 0.4163;
constexpr double kScoreTolerance = 5e-4;
constexpr int kPartitionTrials = 1000;
constexpr int kLlamTriples = 1000;
constexpr double kOverfitAccuracy = 0.95;
constexpr std::size_t kOverfitEpochs = 200;
constexpr double kOverfitBudgetSeconds = 300.0;
constexpr double kTenCropTolerance = 1e-12;

struct Outcome {
    bool pass = true;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// 1 ---------------------------------------------------------------------------
Outcome gradient_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    double worst = 0.0;
    std::string worst_name;
    std::set<ad::Kernel> covered;
    auto run = [&](const std::string& name, const ad::Program& p, const std::vector<Tensor>& params) {
        const ad::GradCheckReport r = ad::grad_check(p, params, kGradEps);
        if (!r.passed(kGradTolerance)) {
            o.pass = false;
            o.detail += name + " failed (" + fmt("%.3e", r.max_relative_error) + "); ";
        }
        if (r.max_relative_error >= worst) {
            worst = r.max_relative_error;
            worst_name = name;
        }
    };
    for (const auto& c : ad::kernel_checks()) {
        covered.insert(c.kernel);
        run(c.name, c.program, c.params);
    }
    for (ad::Kernel k : ad::all_kernels()) {
        if (!covered.contains(k)) {
            o.pass = false;
            o.detail += "no check for kernel " + std::string(ad::kernel_name(k)) + "; ";
        }
    }
    std::size_t models = 0;
    for (const auto& m : model_checks()) {
        run(m.name, m.program, m.params);
        ++models;
    }
    const double secs = seconds_since(t0);
    if (secs >= kGradBudgetSeconds) o.pass = false;
    o.detail += std::to_string(covered.size()) + " kernels + " + std::to_string(models) + " model checks, max rel err " +
                fmt("%.2e", worst) + " (" + worst_name + "), " + fmt("%.1f", secs) + " s";
    return o;
}

// 2 ---------------------------------------------------------------------------
Outcome kernel_oracles() {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> small(1, 4), side(3, 9), kern(1, 3), stride(1, 2), pad(0, 2);
    double conv_err = 0.0, lin_err = 0.0, max_err = 0.0, avg_err = 0.0;
    for (int i = 0; i < kOracleInstances; ++i) {
        const std::size_t k = kern(rng);
        const std::size_t h = std::max(k, side(rng)), w = std::max(k, side(rng));
        const Tensor x = oracle::random_tensor({small(rng), small(rng), h, w}, rng);
        ConvSpec spec;
        spec.out_channels = small(rng);
        spec.in_channels = x.shape().c;
        spec.kernel_h = spec.kernel_w = k;
        spec.stride = stride(rng);
        spec.padding = std::min(pad(rng), k - 1);
        spec.has_bias = i % 2 == 0;
        const Tensor wt = oracle::random_tensor(spec.weight_shape(), rng);
        std::vector<double> bias;
        if (spec.has_bias) {
            const Tensor b = oracle::random_tensor({1, spec.out_channels, 1, 1}, rng);
            bias.assign(b.data().begin(), b.data().end());
        }
        conv_err = std::max(conv_err, oracle::max_abs_diff(conv2d(x, wt, bias, spec),
                                                           oracle::conv2d(x, wt, bias, spec.stride, spec.padding)));

        const Tensor lx = oracle::random_tensor({small(rng), small(rng), small(rng), small(rng)}, rng);
        const std::size_t d = lx.shape().c * lx.shape().h * lx.shape().w;
        const Tensor lw = oracle::random_tensor({small(rng) + 1, d, 1, 1}, rng);
        const Tensor lb = oracle::random_tensor({1, lw.shape().n, 1, 1}, rng);
        const std::vector<double> lbv(lb.data().begin(), lb.data().end());
        lin_err = std::max(lin_err, oracle::max_abs_diff(linear(lx, lw, lbv), oracle::matmul_bias(lx, lw, lbv)));

        const std::size_t win = stride(rng), st = stride(rng);
        const Tensor px = oracle::random_tensor({small(rng), small(rng), std::max(win, side(rng)), std::max(win, side(rng))}, rng);
        max_err = std::max(max_err, oracle::max_abs_diff(pool2d(px, PoolKind::max, win, st), oracle::max_pool(px, win, st)));
        avg_err = std::max(avg_err, oracle::max_abs_diff(pool2d(px, PoolKind::global_avg), oracle::global_avg(px)));
    }
    Outcome o;
    o.pass = conv_err <= kOracleTolerance && lin_err <= kOracleTolerance && max_err <= kOracleTolerance &&
             avg_err <= kOracleTolerance;
    o.detail = std::to_string(kOracleInstances) + " instances each; max |diff| conv " + fmt("%.1e", conv_err) +
               ", linear " + fmt("%.1e", lin_err) + ", max-pool " + fmt("%.1e", max_err) + ", global-avg " +
               fmt("%.1e", avg_err);
    return o;
}

// 3 ---------------------------------------------------------------------------
Outcome metric_arithmetic() {
    const double s = challenge_score(0.49, 0.38);
    const std::string two = fmt("%.2f", s);
    const double margin = std::stod(two) - 0.36;
    Outcome o;
    o.pass = std::abs(s - kScoreTarget) <= kScoreTolerance && two == "0.42" && margin >= 0.06 - 1e-9 &&
             margin <= 0.07 + 1e-9;
    o.detail = "score(0.49, 0.38) = " + fmt("%.4f", s) + " -> " + two + ", margin over 0.36 baseline " +
               fmt("%.2f", margin);
    return o;
}

// 4 ---------------------------------------------------------------------------
Outcome rebalance_arithmetic() {
    Outcome o;
    const RebalanceResult r =
        rebalance(fixture::training_manifest(), fixture::reference_k(), fixture::supplement(), fixture::reference_quota());
    for (std::size_t c = 0; c < 7; ++c) {
        if (r.report.after[c] != fixture::kAfter[c]) {
            o.pass = false;
            o.detail += std::string(class_name(static_cast<int>(c))) + " after " + std::to_string(r.report.after[c]) +
                        " != " + std::to_string(fixture::kAfter[c]) + "; ";
        }
    }
    if (r.report.total_after() != fixture::kTotalAfter || r.manifest.size() != fixture::kTotalAfter) o.pass = false;

    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::size_t> runs(1, 6), len(1, 40), kd(1, 13), gap(2, 5);
    int bad = 0;
    for (int t = 0; t < kPartitionTrials; ++t) {
        DatasetManifest m;
        const std::size_t k = kd(rng);
        std::size_t expect = 0;
        const std::size_t seqs = runs(rng);
        for (std::size_t s = 0; s < seqs; ++s) {
            std::uint64_t frame = 0;
            const std::size_t nr = runs(rng);
            for (std::size_t i = 0; i < nr; ++i) {
                const std::size_t n = len(rng);
                fixture::add_run(m, "q" + std::to_string(s), 6, frame, n);
                expect += (n + k - 1) / k;
                frame += n + gap(rng) - 1;
            }
        }
        std::shuffle(m.records.begin(), m.records.end(), rng);
        if (undersample_sequences(m, {{6, k}}).size() != expect) ++bad;
    }
    if (bad) o.pass = false;
    o.detail += "total after " + std::to_string(r.report.total_after()) + " (want " +
                std::to_string(fixture::kTotalAfter) + "), ceil(n/k) held on " +
                std::to_string(kPartitionTrials - bad) + "/" + std::to_string(kPartitionTrials) + " partitions";
    return o;
}

// 5 ---------------------------------------------------------------------------
Outcome llam_invariants() {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> d(1, 5);
    int range = 0, attenuation = 0, shape = 0, path = 0;
    for (int t = 0; t < kLlamTriples; ++t) {
        const std::size_t c = d(rng);
        const Shape s{d(rng), c, d(rng), d(rng)};
        const Tensor pre = oracle::random_tensor(s, rng, -2, 2), cur = oracle::random_tensor(s, rng, -2, 2);
        LlamParams p = llam_init(c, 3, rng);
        p.bias = oracle::random_tensor(p.bias.shape(), rng, -0.5, 0.5);
        const LlamOutput out = llam_forward(pre, cur, p);
        if (out.refined.shape() != s || out.attention.shape() != s) ++shape;
        bool r_ok = true, a_ok = true;
        for (std::size_t i = 0; i < cur.size(); ++i) {
            if (!(out.attention[i] > 0.0 && out.attention[i] < 1.0)) r_ok = false;
            const bool strict = cur[i] == 0.0 ? out.refined[i] == 0.0 : std::abs(out.refined[i]) < std::abs(cur[i]);
            if (!strict) a_ok = false;
        }
        range += !r_ok;
        attenuation += !a_ok;
        Tensor bumped = pre;
        for (double& v : bumped.data()) v += 0.5;
        if (oracle::max_abs_diff(llam_forward(bumped, cur, p).refined, out.refined) == 0.0) ++path;
    }
    Outcome o;
    o.pass = range == 0 && attenuation == 0 && shape == 0 && path == 0;
    o.detail = std::to_string(kLlamTriples) + " triples; violations: range " + std::to_string(range) +
               ", attenuation " + std::to_string(attenuation) + ", shape " + std::to_string(shape) +
               ", f_pre insensitivity " + std::to_string(path);
    return o;
}

// 6 ---------------------------------------------------------------------------
Outcome overfit() {
    const SyntheticSet set = make_synthetic(10, 32, 1);
    const NetworkConfig net = NetworkConfig::tiny();
    PipelineConfig data;
    data.augment = false;
    data.tencrop = false;
    Outcome o;
    for (bool frozen : {false, true}) {
        TrainConfig cfg;
        cfg.seed = 3;
        cfg.base_lr = 0.05;
        cfg.batch_size = 10;
        cfg.max_epochs = kOverfitEpochs;
        cfg.stop_at_train_acc = kOverfitAccuracy;
        cfg.eval_every = 1000;
        cfg.freeze_llam = frozen;
        const auto t0 = std::chrono::steady_clock::now();
        const FitResult r = fit(init_network(net), net, cfg, data, set.manifest, nullptr, memory_images(set));
        const double secs = seconds_since(t0);
        const bool ok = r.last_train.accuracy >= kOverfitAccuracy && secs < kOverfitBudgetSeconds;
        o.pass = o.pass && ok;
        o.detail += std::string(frozen ? "frozen LLAM" : "LLAM") + " " + fmt("%.3f", r.last_train.accuracy) +
                    " train acc in " + std::to_string(r.logs.size()) + " epochs, " + fmt("%.1f", secs) + " s";
        if (!frozen) o.detail += "; ";
    }
    o.detail = std::to_string(set.manifest.size()) + " images: " + o.detail;
    return o;
}

// 7 ---------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Outcome determinism() {
    Outcome o;
    std::random_device rd;
    const fs::path dir = fs::temp_directory_path() / ("lla_acceptance_" + std::to_string(rd()));
    fs::create_directories(dir);
    std::ostringstream sink;
    auto cli = [&](const std::vector<std::string>& args) { return run_cli(args, sink, sink); };
    if (cli({"make-synthetic", "--per-class", "3", "--size", "32", "--seed", "2", "--out", dir.string()}) != kExitOk) {
        o.pass = false;
    }
    std::ofstream(dir / "run.json") << R"({"seed": 7, "network": {"preset": "tiny"},
        "train": {"base_lr": 0.05, "batch_size": 8, "max_epochs": 4},
        "data": {"train_manifest": "manifest.csv", "augment": true, "tencrop": true}})";
    const int a = cli({"train", "--config", (dir / "run.json").string(), "--out", (dir / "a").string()});
    const int b = cli({"train", "--config", (dir / "run.json").string(), "--out", (dir / "b").string()});
    const std::string ma = slurp(dir / "a" / "metrics.json"), mb = slurp(dir / "b" / "metrics.json");
    const std::string ca = slurp(dir / "a" / "best.ckpt"), cb = slurp(dir / "b" / "best.ckpt");
    std::string digest;
    if (a == kExitOk && b == kExitOk && !ma.empty()) digest = nlohmann::json::parse(ma)["checkpoint_digest"];
    o.pass = o.pass && a == kExitOk && b == kExitOk && !ma.empty() && ma == mb && !ca.empty() && ca == cb &&
             digest == hex64(fnv1a64(ca));
    o.detail = "metrics.json " + std::string(ma == mb && !ma.empty() ? "identical" : "DIFFERENT") +
               ", checkpoint digest " + (digest.empty() ? "missing" : digest) +
               (ca == cb ? " on both runs" : " differs between runs");
    std::error_code ec;
    fs::remove_all(dir, ec);
    return o;
}

// 8 ---------------------------------------------------------------------------
Outcome tencrop_contract() {
    const SyntheticSet set = make_synthetic(2, 32, 8);
    const NetworkConfig net = NetworkConfig::tiny();
    ParamStore params = init_network(net);
    PipelineConfig data;
    data.augment = false;
    {
        TrainConfig cfg;
        cfg.batch_size = 7;
        OptimizerState st = OptimizerState::for_params(params);
        std::mt19937_64 rng(1);
        train_epoch(params, st, net, set.manifest, cfg, data, rng, memory_images(set));
    }
    const EvalResult ev = evaluate(params, net, set.manifest, data, true, memory_images(set));
    Outcome o;
    double worst = 0.0;
    bool dims = true;
    std::size_t mismatched = 0;
    for (std::size_t i = 0; i < set.manifest.size(); ++i) {
        const Image& img = set.images.at(set.manifest.records[i].image_path);
        const std::size_t side = default_eval_crop(img);
        const auto crops = ten_crop(img, side);
        dims = dims && crops.size() == 10 && side == 28;
        std::vector<double> avg(net.classes, 0.0);
        for (const Image& c : crops) {
            dims = dims && c.height == side && c.width == side && c.channels == 3;
            const Tensor p = softmax(predict_logits(to_batch({c}, data.normalization), params, net));
            for (std::size_t k = 0; k < net.classes; ++k) avg[k] += p[k];
        }
        for (double& v : avg) v /= 10.0;
        if (i >= ev.predictions.size()) continue;
        const Prediction& pr = ev.predictions[i];
        for (std::size_t k = 0; k < net.classes; ++k) worst = std::max(worst, std::abs(avg[k] - pr.probabilities[k]));
        if (pr.predicted != argmax(avg) || pr.index != i) ++mismatched;
    }
    o.pass = ev.predictions.size() == set.manifest.size() && ev.confusion.total() == set.manifest.size() && dims &&
             worst <= kTenCropTolerance && mismatched == 0;
    o.detail = std::to_string(ev.predictions.size()) + " predictions for " + std::to_string(set.manifest.size()) +
               " images, 10 crops of 28x28 each" + (dims ? "" : " (DIMENSION MISMATCH)") +
               ", max |avg - recomputed| " + fmt("%.1e", worst) + ", label mismatches " +
               std::to_string(mismatched);
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 gradient suite", gradient_suite},
        {"2 kernel oracles", kernel_oracles},
        {"3 metric arithmetic", metric_arithmetic},
        {"4 rebalance arithmetic", rebalance_arithmetic},
        {"5 LLAM invariants", llam_invariants},
        {"6 overfit smoke test", overfit},
        {"7 determinism", determinism},
        {"8 TenCrop contract", tencrop_contract},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << std::endl;
    return failed ? 1 : 0;
}
