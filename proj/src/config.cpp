#include "rtx/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "rtx/checkpoint.hpp"
#include "rtx/errors.hpp"

namespace rtx {

using nlohmann::json;
namespace fs = std::filesystem;

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (threads < 1) throw ParameterError("threads must be >= 1");
}

json to_json(const RunConfig& c) {
  json j;
  j["model"] = {
      {"base_channels", c.model.base_channels},
      {"heads", c.model.heads},
      {"attention_blocks_per_branch", c.model.attention_blocks_per_branch},
      {"fused_channels", c.model.fused_channels},
      {"ffn_expansion", c.model.ffn_expansion},
      {"head_hidden", c.model.head_hidden},
  };
  const auto& t = c.train;
  j["train"] = {
      {"learning_rate", t.learning_rate},
      {"batch_size", t.batch_size},
      {"patch", t.patch},
      {"iterations", t.iterations},
      {"adam_beta1", t.adam_beta1},
      {"adam_beta2", t.adam_beta2},
      {"adam_eps", t.adam_eps},
      {"seed", t.seed},
      {"ablation_mode", to_string(t.ablation_mode)},
      {"checkpoint_every", t.checkpoint_every},
      {"calibration_patches", t.calibration_patches},
      {"calibration_pixels_per_patch", t.calibration_pixels_per_patch},
      {"weight_decay", t.weight_decay},
      {"grad_clip_norm", t.grad_clip_norm},
      {"warmup_steps", t.warmup_steps},
  };
  j["paths"] = {
      {"train_manifest", c.train_manifest.generic_string()},
      {"test_manifest", c.test_manifest.generic_string()},
      {"checkpoint", c.checkpoint.generic_string()},
      {"output_dir", c.output_dir.generic_string()},
  };
  j["threads"] = c.threads;
  return j;
}

namespace {

template <typename T>
void take(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParameterError("config: '" + section + "." + key + "' has the wrong type");
  }
}

void reject_unknown(const json& obj, const std::set<std::string>& known,
                    const std::string& section) {
  if (!obj.is_object()) throw ParameterError("config: '" + section + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key())) {
      throw ParameterError("config: unknown key '" + (section.empty() ? "" : section + ".") +
                           it.key() + "'");
    }
  }
}

fs::path resolve(const std::string& s, const fs::path& base) {
  if (s.empty()) return {};
  fs::path p(s);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

}  // namespace

RunConfig merge_json(RunConfig c, const json& j, const fs::path& base_dir) {
  reject_unknown(j, {"model", "train", "paths", "threads"}, "");
  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown(m,
                   {"base_channels", "heads", "attention_blocks_per_branch", "fused_channels",
                    "ffn_expansion", "head_hidden"},
                   "model");
    take(m, "base_channels", c.model.base_channels, "model");
    take(m, "heads", c.model.heads, "model");
    take(m, "attention_blocks_per_branch", c.model.attention_blocks_per_branch, "model");
    take(m, "fused_channels", c.model.fused_channels, "model");
    take(m, "ffn_expansion", c.model.ffn_expansion, "model");
    take(m, "head_hidden", c.model.head_hidden, "model");
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    reject_unknown(t,
                   {"learning_rate", "batch_size", "patch", "iterations", "adam_beta1",
                    "adam_beta2", "adam_eps", "seed", "ablation_mode", "checkpoint_every",
                    "calibration_patches", "calibration_pixels_per_patch", "weight_decay",
                    "grad_clip_norm", "warmup_steps"},
                   "train");
    auto& tc = c.train;
    take(t, "learning_rate", tc.learning_rate, "train");
    take(t, "batch_size", tc.batch_size, "train");
    take(t, "patch", tc.patch, "train");
    take(t, "iterations", tc.iterations, "train");
    take(t, "adam_beta1", tc.adam_beta1, "train");
    take(t, "adam_beta2", tc.adam_beta2, "train");
    take(t, "adam_eps", tc.adam_eps, "train");
    take(t, "seed", tc.seed, "train");
    if (t.contains("ablation_mode")) {
      std::string mode;
      take(t, "ablation_mode", mode, "train");
      tc.ablation_mode = parse_fusion_mode(mode);
    }
    take(t, "checkpoint_every", tc.checkpoint_every, "train");
    take(t, "calibration_patches", tc.calibration_patches, "train");
    take(t, "calibration_pixels_per_patch", tc.calibration_pixels_per_patch, "train");
    take(t, "weight_decay", tc.weight_decay, "train");
    take(t, "grad_clip_norm", tc.grad_clip_norm, "train");
    take(t, "warmup_steps", tc.warmup_steps, "train");
  }
  if (j.contains("paths")) {
    const json& p = j["paths"];
    reject_unknown(p, {"train_manifest", "test_manifest", "checkpoint", "output_dir"}, "paths");
    const auto path_key = [&](const char* key, fs::path& out) {
      std::string s;
      if (!p.contains(key)) return;
      take(p, key, s, "paths");
      out = resolve(s, base_dir);
    };
    path_key("train_manifest", c.train_manifest);
    path_key("test_manifest", c.test_manifest);
    path_key("checkpoint", c.checkpoint);
    path_key("output_dir", c.output_dir);
  }
  take(j, "threads", c.threads, "threads");
  c.model.patch_train_size = c.train.patch;
  c.model.mode = c.train.ablation_mode;
  return c;
}

RunConfig load_run_config(const fs::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParameterError("config file " + path.string() + " does not parse: " + e.what());
  }
  return merge_json(std::move(base), j, fs::absolute(path).parent_path());
}

std::string canonical_json(const RunConfig& c) { return to_json(c).dump(); }

std::string config_hash(const RunConfig& c) { return json_hash(to_json(c)); }

std::string json_hash(const json& j) {
  const std::string s = j.dump();
  const auto h = fnv1a64(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

fs::path snapshot_config(const RunConfig& c, const fs::path& dir) {
  return snapshot_json(to_json(c), dir);
}

fs::path snapshot_json(const json& j, const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path p = dir / "config.resolved.json";
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << j.dump(2) << '\n';
  return p;
}

}  // namespace rtx
