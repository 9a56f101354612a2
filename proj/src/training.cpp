#include "rtx/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "rtx/imageio.hpp"

namespace rtx {
namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be > 0");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (patch < 16) throw ParameterError("patch must be >= 16");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ParameterError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ParameterError("adam_eps must be > 0");
  if (calibration_patches < 1 || calibration_pixels_per_patch < 1) {
    throw ParameterError("calibration sizes must be >= 1");
  }
  if (weight_decay < 0.0 || grad_clip_norm < 0.0) {
    throw ParameterError("weight_decay and grad_clip_norm must be >= 0");
  }
}

AdamHyper TrainConfig::adam(double lr) const {
  return AdamHyper{lr, adam_beta1, adam_beta2, adam_eps, weight_decay};
}

double TrainConfig::lr_at(std::uint64_t step) const {
  if (warmup_steps == 0 || step >= warmup_steps) return learning_rate;
  return learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
}

double mae_loss(const Matrix& pred, const Matrix& gt, const std::vector<double>& mask) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
    throw ShapeError("mae_loss: prediction and target shapes differ");
  }
  if (!mask.empty() && mask.size() != static_cast<std::size_t>(pred.cols())) {
    throw ShapeError("mae_loss: mask size does not match pixel count");
  }
  double sum = 0.0, count = 0.0;
  for (Eigen::Index p = 0; p < pred.cols(); ++p) {
    const double w = mask.empty() ? 1.0 : mask[static_cast<std::size_t>(p)];
    if (w == 0.0) continue;
    for (Eigen::Index c = 0; c < pred.rows(); ++c) sum += w * std::abs(pred(c, p) - gt(c, p));
    count += w * static_cast<double>(pred.rows());
  }
  return count > 0.0 ? sum / count : 0.0;
}

double mae_loss(const Image& pred, const Image& gt) {
  if (!pred.same_shape(gt)) throw ShapeError("mae_loss: prediction and target shapes differ");
  const auto a = pred.data(), b = gt.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return a.empty() ? 0.0 : sum / static_cast<double>(a.size());
}

Matrix mae_loss_grad(const Matrix& pred, const Matrix& gt, const std::vector<double>& mask,
                     double count) {
  Matrix g(pred.rows(), pred.cols());
  for (Eigen::Index p = 0; p < pred.cols(); ++p) {
    const double w = mask.empty() ? 1.0 : mask[static_cast<std::size_t>(p)];
    for (Eigen::Index c = 0; c < pred.rows(); ++c) {
      const double d = pred(c, p) - gt(c, p);
      g(c, p) = w * static_cast<double>((d > 0.0) - (d < 0.0)) / count;
    }
  }
  return g;
}

namespace {

template <int C>
Raster<C> crop(const Raster<C>& in, int y0, int x0, int size) {
  Raster<C> out(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      for (int c = 0; c < C; ++c) out.at(y, x, c) = in.at(y0 + y, x0 + x, c);
    }
  }
  return out;
}

// Source coordinate of output pixel (y, x) for an H x W input.
std::pair<int, int> dihedral_source(int transform, int y, int x, int H, int W) {
  switch (transform) {
    case 0: return {y, x};
    case 1: return {H - 1 - x, y};
    case 2: return {H - 1 - y, W - 1 - x};
    case 3: return {x, W - 1 - y};
    case 4: return {y, W - 1 - x};
    case 5: return {H - 1 - y, x};
    case 6: return {x, y};
    case 7: return {H - 1 - x, W - 1 - y};
  }
  throw ParameterError("dihedral transform index must lie in [0, 8)");
}

bool swaps_axes(int transform) {
  return transform == 1 || transform == 3 || transform == 6 || transform == 7;
}

}  // namespace

template <int C>
Raster<C> apply_dihedral(const Raster<C>& in, int transform) {
  if (transform < 0 || transform >= kDihedralTransforms) {
    throw ParameterError("dihedral transform index must lie in [0, 8)");
  }
  const int H = in.height(), W = in.width();
  if (swaps_axes(transform) && H != W) {
    throw ShapeError("rotation/transpose augmentation needs a square patch, got " +
                     std::to_string(H) + "x" + std::to_string(W));
  }
  Raster<C> out(H, W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const auto [sy, sx] = dihedral_source(transform, y, x, H, W);
      for (int c = 0; c < C; ++c) out.at(y, x, c) = in.at(sy, sx, c);
    }
  }
  return out;
}

template Raster<1> apply_dihedral(const Raster<1>&, int);
template Raster<3> apply_dihedral(const Raster<3>&, int);

std::vector<double> apply_dihedral_mask(const std::vector<double>& mask, int height, int width,
                                        int transform) {
  if (mask.empty()) return {};
  return apply_dihedral(ThermalImage(height, width, mask), transform).values();
}

PatchTriple sample_patch(const TrainingPair& pair, int patch, Rng& rng) {
  const int H = pair.low.height(), W = pair.low.width();
  if (!pair.low.same_shape(pair.reference) || !pair.low.same_shape(pair.thermal)) {
    throw ShapeError("sample_patch: frames of pair '" + pair.id + "' are not aligned");
  }
  if (patch < 1 || H < patch || W < patch) {
    throw ShapeError("sample_patch: pair '" + pair.id + "' (" + std::to_string(H) + "x" +
                     std::to_string(W) + ") is smaller than the " + std::to_string(patch) +
                     " patch");
  }
  PatchTriple t;
  t.offset_y = static_cast<int>(rng.below(static_cast<std::uint64_t>(H - patch + 1)));
  t.offset_x = static_cast<int>(rng.below(static_cast<std::uint64_t>(W - patch + 1)));
  t.low = crop(pair.low, t.offset_y, t.offset_x, patch);
  t.thermal = crop(pair.thermal, t.offset_y, t.offset_x, patch);
  t.reference = crop(pair.reference, t.offset_y, t.offset_x, patch);
  if (!pair.mask.empty()) {
    t.mask = crop(ThermalImage(H, W, pair.mask), t.offset_y, t.offset_x, patch).values();
  }
  return t;
}

PatchTriple augment_with(const PatchTriple& p, int transform) {
  PatchTriple out;
  out.low = apply_dihedral(p.low, transform);
  out.thermal = apply_dihedral(p.thermal, transform);
  out.reference = apply_dihedral(p.reference, transform);
  out.mask = apply_dihedral_mask(p.mask, p.low.height(), p.low.width(), transform);
  out.offset_y = p.offset_y;
  out.offset_x = p.offset_x;
  out.transform = transform;
  return out;
}

PatchTriple augment(const PatchTriple& p, Rng& rng) {
  return augment_with(p, static_cast<int>(rng.below(kDihedralTransforms)));
}

std::vector<TrainingPair> load_training_pairs(const Manifest& m) {
  std::vector<TrainingPair> pairs;
  for (const auto& row : m.rows) {
    TrainingPair p;
    p.id = row.id;
    p.low = load_rgb(row.rgb_low);
    p.reference = load_rgb(row.rgb_ref);
    if (!p.low.same_shape(p.reference)) {
      throw ShapeError("row '" + row.id + "': low-light and reference frames differ in size");
    }
    if (p.low.height() < kMinImageSide || p.low.width() < kMinImageSide) {
      throw ShapeError("row '" + row.id + "': frame smaller than 8x8");
    }
    ThermalImage thermal = load_thermal(row.thermal);
    if (row.homography) {
      WarpResult w = warp_homography(thermal, *row.homography, p.low.height(), p.low.width());
      p.thermal = std::move(w.image);
      p.mask = w.mask.values();
    } else {
      if (!thermal.same_shape(p.low)) {
        throw ShapeError("row '" + row.id + "': thermal frame is not aligned with the RGB frame");
      }
      p.thermal = std::move(thermal);
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

PcaProjection calibrate_projection(const RtxNet& net, const std::vector<TrainingPair>& data,
                                   const TrainConfig& cfg) {
  if (data.empty()) throw ParameterError("calibration needs at least one training pair");
  Rng rng(mix64(cfg.seed ^ 0x70636163616c6962ULL));
  const int channels = net.config().fused_input_channels();
  std::vector<Matrix> chunks;
  Eigen::Index total = 0;
  for (int i = 0; i < cfg.calibration_patches; ++i) {
    const auto& pair = data[rng.below(data.size())];
    const int patch = std::min({cfg.patch, pair.low.height(), pair.low.width()});
    const PatchTriple t = sample_patch(pair, patch, rng);
    const Matrix fused =
        net.fused_features(to_channel_major(t.low), to_channel_major(t.thermal), patch, patch);
    if (!fused.allFinite()) throw TrainingAbort("non-finite features during PCA calibration");
    const Eigen::Index take = std::min<Eigen::Index>(cfg.calibration_pixels_per_patch, fused.cols());
    Matrix chunk(channels, take);
    for (Eigen::Index k = 0; k < take; ++k) {
      chunk.col(k) = fused.col(static_cast<Eigen::Index>(rng.below(fused.cols())));
    }
    total += take;
    chunks.push_back(std::move(chunk));
  }
  Matrix samples(channels, total);
  Eigen::Index at = 0;
  for (const auto& c : chunks) {
    samples.middleCols(at, c.cols()) = c;
    at += c.cols();
  }
  return pca_fit(samples, net.config().fused_channels);
}

Trainer::Trainer(ModelConfig mcfg, TrainConfig tcfg, std::vector<TrainingPair> data)
    : mcfg_([&] {
        mcfg.mode = tcfg.ablation_mode;
        return mcfg;
      }()),
      tcfg_(tcfg),
      data_(std::move(data)),
      net_(mcfg_),
      rng_(tcfg.seed) {
  tcfg_.validate();
  if (data_.empty()) throw ParameterError("training needs at least one pair");
  for (const auto& p : data_) {
    if (p.low.height() < tcfg_.patch || p.low.width() < tcfg_.patch) {
      throw ParameterError("patch " + std::to_string(tcfg_.patch) + " exceeds pair '" + p.id +
                           "' (" + std::to_string(p.low.height()) + "x" +
                           std::to_string(p.low.width()) + ")");
    }
  }
}

void Trainer::initialize() {
  net_.initialize(tcfg_.seed);
  net_.set_projection(calibrate_projection(net_, data_, tcfg_));
  adam_ = AdamState::zeros_like(net_.params());
  iteration_ = 0;
}

std::vector<PatchTriple> Trainer::next_batch() {
  std::vector<PatchTriple> batch;
  batch.reserve(tcfg_.batch_size);
  for (int b = 0; b < tcfg_.batch_size; ++b) {
    const auto& pair = data_[rng_.below(data_.size())];
    batch.push_back(augment(sample_patch(pair, tcfg_.patch, rng_), rng_));
  }
  return batch;
}

double Trainer::step_on(const std::vector<PatchTriple>& batch) {
  auto& store = net_.params();
  store.zero_grad();

  double count = 0.0;
  for (const auto& t : batch) {
    const double valid = t.mask.empty() ? static_cast<double>(t.low.pixels())
                                        : std::accumulate(t.mask.begin(), t.mask.end(), 0.0);
    count += 3.0 * valid;
  }
  if (count <= 0.0) throw TrainingAbort("batch has no valid pixels");

  double loss_sum = 0.0;
  for (const auto& t : batch) {
    const int h = t.low.height(), w = t.low.width();
    const Matrix gt = to_channel_major(t.reference);
    RtxNet::State state;
    const Matrix out = net_.forward(to_channel_major(t.low), to_channel_major(t.thermal), h, w, &state);
    loss_sum += mae_loss(out, gt, t.mask) * 3.0 *
                (t.mask.empty() ? static_cast<double>(t.low.pixels())
                                : std::accumulate(t.mask.begin(), t.mask.end(), 0.0));
    net_.backward(state, mae_loss_grad(out, gt, t.mask, count));
  }
  const double loss = loss_sum / count;
  if (!std::isfinite(loss)) {
    throw TrainingAbort("non-finite loss at iteration " + std::to_string(iteration_));
  }

  if (tcfg_.grad_clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& e : store.entries()) {
      for (double g : e.grad) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > tcfg_.grad_clip_norm) {
      const double s = tcfg_.grad_clip_norm / norm;
      for (std::size_t i = 0; i < store.count(); ++i) {
        for (double& g : store.entry(i).grad) g *= s;
      }
    }
  }
  adam_step(store, adam_, tcfg_.adam(tcfg_.lr_at(iteration_)));
  ++iteration_;
  return loss;
}

StepRecord Trainer::step() {
  StepRecord r;
  r.step = iteration_;
  r.lr = tcfg_.lr_at(iteration_);
  r.loss = step_on(next_batch());
  return r;
}

double Trainer::evaluate_mae() const {
  double sum = 0.0, count = 0.0;
  for (const auto& p : data_) {
    const Matrix out = net_.forward(to_channel_major(p.low), to_channel_major(p.thermal),
                                    p.low.height(), p.low.width());
    const double n = 3.0 * (p.mask.empty() ? static_cast<double>(p.low.pixels())
                                           : std::accumulate(p.mask.begin(), p.mask.end(), 0.0));
    sum += mae_loss(out, to_channel_major(p.reference), p.mask) * n;
    count += n;
  }
  return count > 0.0 ? sum / count : 0.0;
}

Checkpoint Trainer::checkpoint() const { return checkpoint_from_network(net_, adam_, iteration_); }

std::string format_step_line(const StepRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "step %llu loss %.17g lr %.17g",
                static_cast<unsigned long long>(r.step), r.loss, r.lr);
  return buf;
}

TrainOutputs train(std::vector<TrainingPair> data, ModelConfig mcfg, const TrainConfig& tcfg,
                   const fs::path& output_dir, const StepCallback& on_step) {
  fs::create_directories(output_dir);
  Trainer trainer(mcfg, tcfg, std::move(data));
  trainer.initialize();

  TrainOutputs out;
  out.checkpoint = output_dir / "checkpoint.rtx";
  out.metrics_log = output_dir / "metrics.log";
  save_checkpoint(out.checkpoint, trainer.checkpoint());

  std::ofstream log(out.metrics_log, std::ios::trunc);
  if (!log) throw IoError("cannot write metrics log " + out.metrics_log.string());
  for (std::uint64_t i = 0; i < tcfg.iterations; ++i) {
    const StepRecord r = trainer.step();
    log << format_step_line(r) << '\n';
    log.flush();
    out.final_loss = r.loss;
    out.steps = i + 1;
    if (on_step) on_step(r, trainer);
    if (tcfg.checkpoint_every > 0 && (i + 1) % tcfg.checkpoint_every == 0) {
      save_checkpoint(out.checkpoint, trainer.checkpoint());
    }
  }
  save_checkpoint(out.checkpoint, trainer.checkpoint());
  return out;
}

TrainOutputs train(const Manifest& manifest, ModelConfig mcfg, const TrainConfig& tcfg,
                   const fs::path& output_dir, const StepCallback& on_step) {
  if (manifest.rows.empty()) throw ParameterError("training manifest is empty");
  return train(load_training_pairs(manifest), mcfg, tcfg, output_dir, on_step);
}

}  // namespace rtx
