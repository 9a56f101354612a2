#pragma once

#include <cstdint>
#include <filesystem>

#include "rtx/model.hpp"
#include "rtx/optimizer.hpp"

namespace rtx {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume or run a trained network.
struct Checkpoint {
  ModelConfig config;
  ParameterStore params;  // gradients are not persisted
  PcaProjection pca;
  AdamState adam;
  std::uint64_t iteration = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Byte layout (all integers and floats little-endian):
///
///   "RTXNETCK"                      8-byte magic
///   u32 version                     currently 1
///   i32 x 7                         base_channels, heads, attention_blocks_per_branch,
///                                   fused_channels, patch_train_size, ffn_expansion,
///                                   head_hidden
///   u32 mode                        0 cross_attention, 1 self_only, 2 concat4
///   u64 iteration
///   u32 P                           parameter entries, then per entry:
///     u32 len, bytes name
///     u32 ndim, u32 x ndim dims
///     f64 x prod(dims) values
///   u32 C_in, u32 C_f, f64 explained_variance_fraction
///   f64 x C_in mean, f64 x (C_f * C_in) basis (row-major)
///   u64 adam_t, u32 A (0 or P), then per entry: f64 m[size], f64 v[size]
///   u64 FNV-1a 64 of every preceding byte
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Atomic write (temporary file then rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds a network from a checkpoint; parameter names and shapes must match.
RtxNet network_from_checkpoint(const Checkpoint& ck);
Checkpoint checkpoint_from_network(const RtxNet& net, const AdamState& adam,
                                   std::uint64_t iteration);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace rtx
