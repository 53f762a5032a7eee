#include "lla/training.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <future>
#include <numeric>

#include "lla/errors.hpp"

namespace lla {

void TrainConfig::validate() const {
    if (!(base_lr > 0.0)) throw ConfigError("train/base_lr", "must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train/momentum", "must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("train/weight_decay", "must be >= 0");
    if (!(decay_rate > 0.0 && decay_rate <= 1.0)) throw ConfigError("train/decay_rate", "must be in (0, 1]");
    if (batch_size < 1) throw ConfigError("train/batch_size", "must be >= 1");
    if (eval_every < 1) throw ConfigError("train/eval_every", "must be >= 1");
    if (stop_at_train_acc && !(*stop_at_train_acc > 0.0 && *stop_at_train_acc <= 1.0)) {
        throw ConfigError("train/stop_at_train_acc", "must be in (0, 1]");
    }
}

ImageProvider disk_images(std::filesystem::path root) {
    return [root = std::move(root)](const SampleRecord& r) { return load_image(root / r.image_path); };
}

OptimizerState OptimizerState::for_params(const ParamStore& params) {
    OptimizerState s;
    for (const Param& p : params) s.momentum.emplace_back(p.value.shape());
    return s;
}

double lr_at_epoch(std::size_t epoch, const TrainConfig& cfg) {
    if (epoch < cfg.decay_start_epoch) return cfg.base_lr;
    return cfg.base_lr * std::pow(cfg.decay_rate, static_cast<double>(epoch - cfg.decay_start_epoch + 1));
}

void sgd_step(ParamStore& params, std::span<const Tensor> grads, OptimizerState& state, double lr,
              const SgdOptions& opts) {
    if (grads.size() != params.size() || state.momentum.size() != params.size()) {
        throw DimensionError("params", "sgd_step: gradient/state count does not match parameter count");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = params[i];
        if (!p.trainable() || p.frozen) continue;
        const Tensor& g = grads[i];
        if (g.shape() != p.value.shape()) {
            throw DimensionError("shape", "sgd_step: gradient for " + p.name + " has shape " + g.shape().str() +
                                              ", parameter is " + p.value.shape().str());
        }
        Tensor& buf = state.momentum[i];
        if (buf.shape() != p.value.shape()) {
            throw DimensionError("shape", "sgd_step: momentum buffer for " + p.name + " has wrong shape");
        }
        const double wd = (opts.exempt_norm_and_bias && !p.is_weight()) ? 0.0 : opts.weight_decay;
        auto x = p.value.data();
        auto b = buf.data();
        auto d = g.data();
        for (std::size_t e = 0; e < x.size(); ++e) {
            const double step = d[e] + wd * x[e];
            b[e] = opts.momentum * b[e] + step;
            x[e] -= lr * b[e];
        }
    }
    ++state.step;
}

std::vector<Tensor> collect_grads(const ad::GradMap& grads, const BoundParams& bound, std::size_t count) {
    std::vector<Tensor> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto v = bound.var_at(i);
        if (v && grads.contains(*v)) out[i] = grads[*v];
    }
    return out;
}

namespace {

struct Batch {
    Tensor inputs;
    std::vector<int> labels;
};

Image train_view(const Image& img, std::size_t crop, const PipelineConfig& data, std::uint64_t seed) {
    if (data.augment) {
        std::mt19937_64 rng(seed);
        return augment_train(img, crop, data.pad, rng);
    }
    if (img.height == crop && img.width == crop) return img;
    return center_crop(img, crop);
}

Batch load_batch(const DatasetManifest& manifest, std::vector<std::size_t> indices,
                 std::vector<std::uint64_t> seeds, std::size_t crop, const PipelineConfig& data,
                 const ImageProvider& images) {
    std::vector<Image> views;
    Batch b;
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const SampleRecord& r = manifest.records[indices[j]];
        views.push_back(train_view(images(r), crop, data, seeds[j]));
        b.labels.push_back(r.label);
    }
    b.inputs = to_batch(views, data.normalization);
    return b;
}

}  // namespace

EpochStats train_epoch(ParamStore& params, OptimizerState& state, const NetworkConfig& net,
                       const DatasetManifest& manifest, const TrainConfig& cfg, const PipelineConfig& data,
                       std::mt19937_64& rng, const ImageProvider& images) {
    if (manifest.empty()) throw std::invalid_argument("train_epoch: empty manifest");
    const std::size_t crop = data.train_crop ? data.train_crop : net.in_h;
    const double lr = lr_at_epoch(state.epoch, cfg);
    const SgdOptions sgd{cfg.momentum, cfg.weight_decay, cfg.exempt_norm_and_bias};

    std::vector<std::size_t> order(manifest.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    // Augmentation seeds are drawn up front so prefetching never changes them.
    std::vector<std::uint64_t> seeds(order.size());
    for (auto& s : seeds) s = rng();

    const std::size_t batches = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
    auto launch = [&](std::size_t bi) {
        const std::size_t begin = bi * cfg.batch_size;
        const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<std::uint64_t> sd(seeds.begin() + static_cast<std::ptrdiff_t>(begin),
                                      seeds.begin() + static_cast<std::ptrdiff_t>(end));
        const auto policy = data.prefetch ? std::launch::async : std::launch::deferred;
        return std::async(policy, load_batch, std::cref(manifest), std::move(idx), std::move(sd), crop,
                          std::cref(data), std::cref(images));
    };

    std::deque<std::future<Batch>> pending;
    std::size_t next = 0;
    const std::size_t depth = std::max<std::size_t>(1, data.prefetch);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t bi = 0; bi < batches; ++bi) {
        while (next < batches && pending.size() < depth) pending.push_back(launch(next++));
        Batch batch = pending.front().get();
        pending.pop_front();

        ad::Tape tape;
        BoundParams bound(tape, params);
        NetworkTrace trace = network_forward(tape, tape.constant(std::move(batch.inputs)), bound, net, Mode::train);
        ad::Var loss = ad::softmax_cross_entropy(tape, trace.logits, batch.labels);
        const std::size_t n = batch.labels.size();
        loss_sum += tape.value(loss)[0] * static_cast<double>(n);
        const Tensor& logits = tape.value(trace.logits);
        for (std::size_t i = 0; i < n; ++i) {
            auto row = logits.data().subspan(i * logits.cols(), logits.cols());
            if (argmax(row) == batch.labels[i]) ++correct;
        }
        ad::GradMap grads = tape.backward(loss);
        sgd_step(params, collect_grads(grads, bound, params.size()), state, lr, sgd);
    }
    ++state.epoch;
    return EpochStats{loss_sum / static_cast<double>(order.size()),
                      static_cast<double>(correct) / static_cast<double>(order.size()), order.size()};
}

int argmax(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("argmax: empty input");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return static_cast<int>(best);
}

std::vector<double> average_probabilities(const Tensor& probabilities) {
    const std::size_t n = probabilities.rows();
    const std::size_t k = probabilities.cols();
    if (n == 0) throw std::invalid_argument("average_probabilities: no rows");
    std::vector<double> avg(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) avg[j] += probabilities[i * k + j];
    }
    for (double& v : avg) v /= static_cast<double>(n);
    return avg;
}

std::size_t default_eval_crop(const Image& img) { return std::min(img.height, img.width) * 7 / 8; }

EvalResult evaluate(const ParamStore& params, const NetworkConfig& net, const DatasetManifest& manifest,
                    const PipelineConfig& data, bool use_tencrop, const ImageProvider& images) {
    ParamStore local = params;
    EvalResult res{ConfusionMatrix(net.classes), {}};
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const SampleRecord& r = manifest.records[i];
        const Image img = images(r);
        const std::size_t crop = data.eval_crop ? data.eval_crop : default_eval_crop(img);
        std::vector<Image> views = use_tencrop ? ten_crop(img, crop) : std::vector<Image>{center_crop(img, crop)};
        const Tensor probs = softmax(predict_logits(to_batch(views, data.normalization), local, net));
        Prediction p;
        p.index = i;
        p.truth = r.label;
        p.probabilities = average_probabilities(probs);
        p.predicted = argmax(p.probabilities);
        res.confusion.update(p.truth, p.predicted);
        res.predictions.push_back(std::move(p));
    }
    return res;
}

nlohmann::ordered_json EpochLog::to_json() const {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["lr"] = lr;
    j["train_loss"] = train_loss;
    j["train_acc"] = train_acc;
    j["val_acc"] = val_acc ? nlohmann::ordered_json(*val_acc) : nlohmann::ordered_json(nullptr);
    j["val_f1"] = val_f1 ? nlohmann::ordered_json(*val_f1) : nlohmann::ordered_json(nullptr);
    j["val_score"] = val_score ? nlohmann::ordered_json(*val_score) : nlohmann::ordered_json(nullptr);
    return j;
}

FitResult fit(ParamStore params, const NetworkConfig& net, const TrainConfig& cfg, const PipelineConfig& data,
              const DatasetManifest& train_set, const DatasetManifest* validation, const ImageProvider& images,
              const std::function<void(const EpochLog&)>& on_epoch) {
    cfg.validate();
    if (cfg.freeze_llam) freeze_llam_at_zero(params);
    const DatasetManifest& val = validation ? *validation : train_set;
    OptimizerState state = OptimizerState::for_params(params);
    std::mt19937_64 rng(cfg.seed);
    FitResult res;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        EpochLog log;
        log.epoch = epoch;
        log.lr = lr_at_epoch(epoch, cfg);
        res.last_train = train_epoch(params, state, net, train_set, cfg, data, rng, images);
        log.train_loss = res.last_train.mean_loss;
        log.train_acc = res.last_train.accuracy;
        const bool stop = cfg.stop_at_train_acc && log.train_acc >= *cfg.stop_at_train_acc;
        const bool last = stop || epoch + 1 == cfg.max_epochs;
        if ((epoch + 1) % cfg.eval_every == 0 || last) {
            EvalResult ev = evaluate(params, net, val, data, data.tencrop, images);
            const MetricSummary s = summarize(ev.confusion);
            log.val_acc = s.accuracy;
            log.val_f1 = s.macro_f1;
            log.val_score = challenge_score(s.accuracy, s.macro_f1);
            if (*log.val_score > res.best_score) {
                res.best_score = *log.val_score;
                res.best_epoch = epoch;
                res.best = params;
                res.best_eval = std::move(ev);
            }
        }
        res.logs.push_back(log);
        if (on_epoch) on_epoch(log);
        if (stop) break;
    }
    if (res.logs.empty()) res.best = params;
    return res;
}

}  // namespace lla
