#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rtx/checkpoint.hpp"
#include "rtx/datasets.hpp"
#include "rtx/image.hpp"
#include "rtx/model.hpp"
#include "rtx/optimizer.hpp"
#include "rtx/random.hpp"

namespace rtx {

struct TrainConfig {
  double learning_rate = 2e-4;
  int batch_size = 4;
  int patch = 128;
  std::uint64_t iterations = 2000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  FusionMode ablation_mode = FusionMode::cross_attention;
  std::uint64_t checkpoint_every = 500;
  int calibration_patches = 64;
  int calibration_pixels_per_patch = 1024;
  // Off by default; not part of the reference recipe.
  double weight_decay = 0.0;
  double grad_clip_norm = 0.0;
  std::uint64_t warmup_steps = 0;

  void validate() const;
  AdamHyper adam(double lr) const;
  /// Learning rate at a 0-based step (constant unless warm-up is enabled).
  double lr_at(std::uint64_t step) const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// One aligned training example. `mask` holds one value per pixel (1 valid,
/// 0 excluded from the loss); empty means every pixel is valid.
struct TrainingPair {
  std::string id;
  Image low;
  ThermalImage thermal;
  Image reference;
  std::vector<double> mask;
};

struct PatchTriple {
  Image low;
  ThermalImage thermal;
  Image reference;
  std::vector<double> mask;
  int offset_y = 0;
  int offset_x = 0;
  int transform = 0;
};

/// Mean of |pred - gt| over all (optionally masked) elements.
double mae_loss(const Image& pred, const Image& gt);
double mae_loss(const Matrix& pred, const Matrix& gt, const std::vector<double>& mask = {});
/// d(sum |pred - gt| / count)/d(pred) for a given element count.
Matrix mae_loss_grad(const Matrix& pred, const Matrix& gt, const std::vector<double>& mask,
                     double count);

/// Same uniformly drawn crop window for all three frames.
PatchTriple sample_patch(const TrainingPair& pair, int patch, Rng& rng);

inline constexpr int kDihedralTransforms = 8;
/// 0 identity, 1 rot90 cw, 2 rot180, 3 rot270 cw, 4 flip left-right,
/// 5 flip up-down, 6 transpose, 7 anti-transpose. Indices 1, 3, 6, 7 need a
/// square raster.
template <int C>
Raster<C> apply_dihedral(const Raster<C>& in, int transform);
std::vector<double> apply_dihedral_mask(const std::vector<double>& mask, int height, int width,
                                        int transform);

/// Draws one transform uniformly and applies it to every frame of the triple.
PatchTriple augment(const PatchTriple& p, Rng& rng);
PatchTriple augment_with(const PatchTriple& p, int transform);

/// Loads every row, warping thermal frames with their homography.
std::vector<TrainingPair> load_training_pairs(const Manifest& m);

/// Fits the frozen PCA projection on fused features of randomly drawn patches.
PcaProjection calibrate_projection(const RtxNet& net, const std::vector<TrainingPair>& data,
                                   const TrainConfig& cfg);

struct StepRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

/// In-memory training loop: sample -> augment -> forward -> MAE -> backward
/// -> Adam, with a fixed summation order so runs are reproducible.
class Trainer {
 public:
  Trainer(ModelConfig mcfg, TrainConfig tcfg, std::vector<TrainingPair> data);

  /// Weight initialisation and PCA calibration.
  void initialize();

  std::vector<PatchTriple> next_batch();
  /// One optimisation step on `batch`; returns the loss before the update.
  double step_on(const std::vector<PatchTriple>& batch);
  StepRecord step();

  /// Mean MAE of the unclamped network output over the full training pairs.
  double evaluate_mae() const;

  RtxNet& network() { return net_; }
  const RtxNet& network() const { return net_; }
  const AdamState& adam() const { return adam_; }
  std::uint64_t iteration() const { return iteration_; }
  const TrainConfig& train_config() const { return tcfg_; }
  Checkpoint checkpoint() const;

 private:
  ModelConfig mcfg_;
  TrainConfig tcfg_;
  std::vector<TrainingPair> data_;
  RtxNet net_;
  AdamState adam_;
  Rng rng_;
  std::uint64_t iteration_ = 0;
};

struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_log;
  double final_loss = 0.0;
  std::uint64_t steps = 0;
};

using StepCallback = std::function<void(const StepRecord&, const Trainer&)>;

/// File-driven training: writes `checkpoint.rtx` (every checkpoint_every
/// steps and at the end) and `metrics.log` (`step <n> loss <x> lr <y>` per
/// step) into `output_dir`. A non-finite loss throws TrainingAbort and leaves
/// the last good checkpoint in place.
TrainOutputs train(const Manifest& manifest, ModelConfig mcfg, const TrainConfig& tcfg,
                   const std::filesystem::path& output_dir, const StepCallback& on_step = {});
TrainOutputs train(std::vector<TrainingPair> data, ModelConfig mcfg, const TrainConfig& tcfg,
                   const std::filesystem::path& output_dir, const StepCallback& on_step = {});

std::string format_step_line(const StepRecord& r);

}  // namespace rtx
