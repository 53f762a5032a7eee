#pragma once

// JSON run configuration shared by `lla train` and `lla eval`.
//
// {
//   "seed": 1,
//   "network": {"preset": "tiny", "input": [3, 32, 32],
//               "stem": {"channels": 8, "kernel": 3, "stride": 1},
//               "stages": [{"blocks": 1, "channels": 8, "stride": 1}, ...],
//               "llam_kernel": 3, "classes": 7, "use_llam": true},
//   "train": {"base_lr": 0.01, "momentum": 0.9, "weight_decay": 5e-4, "batch_size": 256,
//             "decay_start_epoch": 60, "decay_rate": 0.9, "max_epochs": 60,
//             "exempt_norm_and_bias": true, "freeze_llam": false,
//             "stop_at_train_acc": null, "eval_every": 1},
//   "data": {"train_manifest": "train.csv", "val_manifest": null, "image_root": ".",
//            "augment": true, "pad": 8, "train_crop": 0, "eval_crop": 0, "tencrop": true,
//            "prefetch": 1},
//   "normalization": {"mean": [0.5], "std": [0.5]}
// }
//
// Unknown keys are rejected. Missing keys take the defaults above; network
// fields default to the chosen preset ("paper" when none is given). Relative
// paths resolve against the config file's directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lla/backbone.hpp"
#include "lla/errors.hpp"
#include "lla/training.hpp"

namespace lla {

struct RunConfig {
    std::uint64_t seed = 0;
    NetworkConfig network = NetworkConfig::paper();
    TrainConfig train;
    PipelineConfig data;
    std::filesystem::path train_manifest;
    std::optional<std::filesystem::path> val_manifest;

    nlohmann::ordered_json to_json() const;
};

/// Every schema violation found, each prefixed by its JSON pointer.
class ConfigValidationError : public ConfigError {
public:
    explicit ConfigValidationError(std::vector<std::string> issues);
    const std::vector<std::string>& issues() const { return issues_; }

private:
    std::vector<std::string> issues_;
};

/// `seed_override` replaces the document's seed (the CLI passes LLA_SEED here).
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                           std::optional<std::uint64_t> seed_override = std::nullopt);

RunConfig load_run_config(const std::filesystem::path& path,
                          std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace lla
