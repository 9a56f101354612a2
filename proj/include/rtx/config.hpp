#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "rtx/model.hpp"
#include "rtx/training.hpp"

namespace rtx {

/// Fully resolved run configuration.
///
/// File schema (JSON; every key optional, unknown keys rejected):
///
///   {
///     "model": {"base_channels", "heads", "attention_blocks_per_branch",
///               "fused_channels", "ffn_expansion", "head_hidden"},
///     "train": {"learning_rate", "batch_size", "patch", "iterations",
///               "adam_beta1", "adam_beta2", "adam_eps", "seed",
///               "ablation_mode", "checkpoint_every", "calibration_patches",
///               "calibration_pixels_per_patch", "weight_decay",
///               "grad_clip_norm", "warmup_steps"},
///     "paths": {"train_manifest", "test_manifest", "checkpoint", "output_dir"},
///     "threads": 1
///   }
///
/// `train.patch` also sets `model.patch_train_size`; `train.ablation_mode`
/// sets the model's fusion mode. Relative paths resolve against the config
/// file's directory.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
  std::filesystem::path checkpoint;
  std::filesystem::path output_dir;
  int threads = 1;

  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

nlohmann::json to_json(const RunConfig& c);
/// Applies the keys present in `j` on top of `base`. Throws ParameterError on
/// unknown keys or wrongly typed values.
RunConfig merge_json(RunConfig base, const nlohmann::json& j,
                     const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Canonical serialisation: sorted keys, no whitespace.
std::string canonical_json(const RunConfig& c);
/// 16 hex digits of FNV-1a 64 over the canonical serialisation.
std::string config_hash(const RunConfig& c);
std::string json_hash(const nlohmann::json& j);

/// Writes `config.resolved.json` (pretty-printed) into `dir`.
std::filesystem::path snapshot_config(const RunConfig& c, const std::filesystem::path& dir);
std::filesystem::path snapshot_json(const nlohmann::json& j, const std::filesystem::path& dir);

}  // namespace rtx
