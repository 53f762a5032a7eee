#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lla/autodiff.hpp"
#include "lla/backbone.hpp"
#include "lla/image.hpp"
#include "lla/manifest.hpp"
#include "lla/metrics.hpp"

namespace lla {

struct TrainConfig {
    double base_lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t batch_size = 256;
    std::size_t decay_start_epoch = 60;
    double decay_rate = 0.9;
    std::size_t max_epochs = 60;
    std::uint64_t seed = 0;
    /// Skip weight decay on batch-norm affine parameters and biases.
    bool exempt_norm_and_bias = true;
    /// Zero and freeze every LLAM parameter before training (M == 0.5).
    bool freeze_llam = false;
    /// Stop once an epoch's training accuracy reaches this value.
    std::optional<double> stop_at_train_acc;
    /// Validation cadence in epochs; the final epoch is always evaluated.
    std::size_t eval_every = 1;

    void validate() const;
};

/// How images become network inputs.
struct PipelineConfig {
    std::filesystem::path image_root;
    bool augment = true;
    std::size_t pad = 8;
    /// Training crop side; 0 means the network's configured input height.
    std::size_t train_crop = 0;
    /// Evaluation crop side; 0 means floor(7/8 * shorter image side).
    std::size_t eval_crop = 0;
    bool tencrop = true;
    Normalization normalization;
    /// Batches loaded ahead of the trainer; 0 loads synchronously.
    std::size_t prefetch = 1;
};

using ImageProvider = std::function<Image(const SampleRecord&)>;

/// Reads `root / record.image_path`.
ImageProvider disk_images(std::filesystem::path root);

struct OptimizerState {
    std::vector<Tensor> momentum;  // mirrors ParamStore entry by entry
    std::size_t step = 0;
    std::size_t epoch = 0;

    static OptimizerState for_params(const ParamStore& params);
};

/// base_lr before decay_start_epoch, base_lr * rate^(epoch - start + 1) from then on.
double lr_at_epoch(std::size_t epoch, const TrainConfig& cfg);

struct SgdOptions {
    double momentum = 0.9;
    double weight_decay = 5e-4;
    bool exempt_norm_and_bias = true;
};

/// g = grad + wd * p;  buf = momentum * buf + g;  p -= lr * buf.
/// `grads` is indexed like `params`; buffers and frozen entries are skipped and
/// may be left empty.
void sgd_step(ParamStore& params, std::span<const Tensor> grads, OptimizerState& state, double lr,
              const SgdOptions& opts);

/// Per-entry gradients from a backward pass, empty where nothing was bound.
std::vector<Tensor> collect_grads(const ad::GradMap& grads, const BoundParams& bound, std::size_t count);

struct EpochStats {
    double mean_loss = 0.0;
    double accuracy = 0.0;
    std::size_t samples = 0;
    bool operator==(const EpochStats&) const = default;
};

/// Seeded shuffle, full batches plus a trailing partial one, train-mode
/// forward, mean cross-entropy, backward, SGD at lr_at_epoch(state.epoch).
/// Advances state.epoch.
EpochStats train_epoch(ParamStore& params, OptimizerState& state, const NetworkConfig& net,
                       const DatasetManifest& manifest, const TrainConfig& cfg, const PipelineConfig& data,
                       std::mt19937_64& rng, const ImageProvider& images);

struct Prediction {
    std::size_t index = 0;
    int truth = 0;
    int predicted = 0;
    std::vector<double> probabilities;
};

struct EvalResult {
    ConfusionMatrix confusion;
    std::vector<Prediction> predictions;
};

/// Lowest index wins ties.
int argmax(std::span<const double> values);
/// Column means of an (n, K) probability matrix.
std::vector<double> average_probabilities(const Tensor& probabilities);

std::size_t default_eval_crop(const Image& img);

/// Eval-mode inference. With TenCrop, softmax probabilities of the ten crops
/// are averaged before the argmax; otherwise a single center crop is scored.
EvalResult evaluate(const ParamStore& params, const NetworkConfig& net, const DatasetManifest& manifest,
                    const PipelineConfig& data, bool use_tencrop, const ImageProvider& images);

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    std::optional<double> val_acc;
    std::optional<double> val_f1;
    std::optional<double> val_score;

    nlohmann::ordered_json to_json() const;
};

struct FitResult {
    ParamStore best;
    std::size_t best_epoch = 0;
    double best_score = -1.0;
    EvalResult best_eval;
    EpochStats last_train;
    std::vector<EpochLog> logs;
};

/// Full training run. The best model is the one with the highest challenge
/// score on `validation` (or on the training set when no validation set is given).
FitResult fit(ParamStore params, const NetworkConfig& net, const TrainConfig& cfg, const PipelineConfig& data,
              const DatasetManifest& train_set, const DatasetManifest* validation, const ImageProvider& images,
              const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace lla
