#include "rtx/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "rtx/checkpoint.hpp"
#include "rtx/config.hpp"
#include "rtx/datasets.hpp"
#include "rtx/degradation.hpp"
#include "rtx/errors.hpp"
#include "rtx/gradcheck.hpp"
#include "rtx/imageio.hpp"
#include "rtx/metrics.hpp"
#include "rtx/training.hpp"

namespace rtx {

namespace fs = std::filesystem;

namespace {

/// Exclusive marker file; a second writer to the same directory fails.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".rtxnet.lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) {
      throw ValidationError("output directory " + dir.string() + " is locked by " +
                            path_.string());
    }
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> train_manifest, test_manifest, checkpoint, output_dir;
  std::optional<int> base_channels, heads, blocks, fused_channels, ffn_expansion, head_hidden;
  std::optional<double> lr;
  std::optional<int> batch_size, patch;
  std::optional<std::uint64_t> iterations, seed, checkpoint_every;
  std::optional<std::string> ablation_mode;
  std::optional<int> threads;
};

void add_model_flags(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--base-channels", o.base_channels, "feature channels C");
  app->add_option("--heads", o.heads, "attention heads");
  app->add_option("--blocks", o.blocks, "attention blocks per branch");
  app->add_option("--fused-channels", o.fused_channels, "channels after PCA reduction");
  app->add_option("--ffn-expansion", o.ffn_expansion, "feed-forward expansion");
  app->add_option("--head-hidden", o.head_hidden, "hidden units of the output head");
  app->add_option("--ablation-mode", o.ablation_mode,
                  "cross_attention | self_only | concat4");
  app->add_option("--seed", o.seed, "random seed");
  app->add_option("--threads", o.threads, "Eigen thread count");
}

void add_train_flags(CLI::App* app, Overrides& o) {
  app->add_option("--lr", o.lr, "Adam learning rate");
  app->add_option("--batch-size", o.batch_size, "patches per step");
  app->add_option("--patch", o.patch, "training patch side");
  app->add_option("--iterations", o.iterations, "optimisation steps");
  app->add_option("--checkpoint-every", o.checkpoint_every, "steps between checkpoints");
  app->add_option("--output-dir", o.output_dir, "output directory (env " +
                                                    std::string(kOutputDirEnv) + ")");
}

fs::path absolute_path(const std::string& s) { return fs::absolute(fs::path(s)).lexically_normal(); }

/// Defaults, then the config file, then the environment, then flags.
RunConfig resolve(const Overrides& o) {
  RunConfig c;
  if (o.config) c = load_run_config(*o.config, c);
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) c.output_dir = absolute_path(env);
  if (o.train_manifest) c.train_manifest = absolute_path(*o.train_manifest);
  if (o.test_manifest) c.test_manifest = absolute_path(*o.test_manifest);
  if (o.checkpoint) c.checkpoint = absolute_path(*o.checkpoint);
  if (o.output_dir) c.output_dir = absolute_path(*o.output_dir);
  if (o.base_channels) c.model.base_channels = *o.base_channels;
  if (o.heads) c.model.heads = *o.heads;
  if (o.blocks) c.model.attention_blocks_per_branch = *o.blocks;
  if (o.fused_channels) c.model.fused_channels = *o.fused_channels;
  if (o.ffn_expansion) c.model.ffn_expansion = *o.ffn_expansion;
  if (o.head_hidden) c.model.head_hidden = *o.head_hidden;
  if (o.lr) c.train.learning_rate = *o.lr;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (o.patch) c.train.patch = *o.patch;
  if (o.iterations) c.train.iterations = *o.iterations;
  if (o.seed) c.train.seed = *o.seed;
  if (o.checkpoint_every) c.train.checkpoint_every = *o.checkpoint_every;
  if (o.ablation_mode) c.train.ablation_mode = parse_fusion_mode(*o.ablation_mode);
  if (o.threads) c.threads = *o.threads;
  c.model.patch_train_size = c.train.patch;
  c.model.mode = c.train.ablation_mode;
  if (c.output_dir.empty()) c.output_dir = absolute_path("rtx_output");
  c.validate();
  Eigen::setNbThreads(c.threads);
  return c;
}

void print_hash(std::ostream& out, const std::string& hash) { out << "config_hash " << hash << '\n'; }

int cmd_train(const Overrides& o, std::ostream& out) {
  const RunConfig c = resolve(o);
  if (c.train_manifest.empty()) throw ParameterError("train: no training manifest given");
  print_hash(out, config_hash(c));
  const Manifest manifest = load_manifest(c.train_manifest);
  OutputLock lock(c.output_dir);
  snapshot_config(c, c.output_dir);
  const std::uint64_t every = std::max<std::uint64_t>(1, c.train.iterations / 10);
  const auto res = train(manifest, c.model, c.train, c.output_dir,
                         [&](const StepRecord& r, const Trainer&) {
                           if ((r.step + 1) % every == 0) out << format_step_line(r) << '\n';
                         });
  out << "pca_explained_variance "
      << format_metric(load_checkpoint(res.checkpoint).pca.explained_variance_fraction) << '\n';
  out << "checkpoint " << res.checkpoint.string() << '\n';
  out << "metrics " << res.metrics_log.string() << '\n';
  return kExitOk;
}

struct EnhanceArgs {
  std::string checkpoint, rgb, thermal, output;
  bool unit_illumination = false;
  int threads = 1;
};

RunConfig config_of_checkpoint(const Checkpoint& ck, const fs::path& path) {
  RunConfig c;
  c.model = ck.config;
  c.train.patch = ck.config.patch_train_size;
  c.train.ablation_mode = ck.config.mode;
  c.checkpoint = fs::absolute(path).lexically_normal();
  return c;
}

int cmd_enhance(const EnhanceArgs& a, std::ostream& out) {
  Eigen::setNbThreads(a.threads);
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  RunConfig c = config_of_checkpoint(ck, a.checkpoint);
  c.threads = a.threads;
  print_hash(out, config_hash(c));
  RtxNet net = network_from_checkpoint(ck);
  net.set_force_unit_illumination(a.unit_illumination);
  const Image rgb = load_rgb(a.rgb);
  const ThermalImage thermal = load_thermal(a.thermal);
  const auto t0 = std::chrono::steady_clock::now();
  const Image result = net.enhance(rgb, thermal);
  const auto t1 = std::chrono::steady_clock::now();
  save_image(result, a.output);
  const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  out << "enhanced " << a.rgb << " (" << rgb.width() << "x" << rgb.height() << ") in "
      << std::fixed << std::setprecision(1) << ms << " ms -> " << a.output << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint, manifest, output, label = "rtxnet";
  bool unit_illumination = false;
  int threads = 1;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  Eigen::setNbThreads(a.threads);
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  RunConfig c = config_of_checkpoint(ck, a.checkpoint);
  c.test_manifest = absolute_path(a.manifest);
  c.threads = a.threads;
  const std::string hash = config_hash(c);
  print_hash(out, hash);
  const Manifest manifest = load_manifest(a.manifest);
  RtxNet net = network_from_checkpoint(ck);
  net.set_force_unit_illumination(a.unit_illumination);
  const EvalReport report = evaluate(
      manifest, [&](const Image& rgb, const ThermalImage& t) { return net.enhance(rgb, t); },
      a.label, hash);
  report.write_csv(a.output);
  std::size_t failed = 0;
  for (const auto& r : report.rows) failed += r.failed ? 1 : 0;
  out << "rows " << report.rows.size() << " failed " << failed << " mean_psnr_db "
      << format_metric(report.mean_psnr_db) << " mean_ssim " << format_metric(report.mean_ssim)
      << '\n';
  return kExitOk;
}

struct DegradeArgs {
  std::string input_dir, output_dir, thermal_dir, split = "train";
  std::uint64_t seed = 0;
  std::optional<double> exposure_factor;
  double factor_low = kExposureLow, factor_high = kExposureHigh;
  double shot = kDefaultShotCoeff, read = kDefaultReadCoeff;
  bool no_noise = false;
};

int cmd_degrade(DegradeArgs a, std::ostream& out, std::ostream& err) {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) a.output_dir = env;
  if (a.output_dir.empty()) throw ParameterError("degrade: no output directory given");
  const fs::path input = absolute_path(a.input_dir);
  const fs::path output = absolute_path(a.output_dir);
  const fs::path thermal_dir = a.thermal_dir.empty() ? input / "thermal" : absolute_path(a.thermal_dir);
  if (a.no_noise) a.shot = a.read = 0.0;

  nlohmann::json j = {{"command", "degrade"},
                      {"input_dir", input.generic_string()},
                      {"output_dir", output.generic_string()},
                      {"thermal_dir", thermal_dir.generic_string()},
                      {"seed", a.seed},
                      {"factor_low", a.factor_low},
                      {"factor_high", a.factor_high},
                      {"shot_coeff", a.shot},
                      {"read_coeff", a.read},
                      {"split", a.split}};
  if (a.exposure_factor) j["exposure_factor"] = *a.exposure_factor;
  print_hash(out, json_hash(j));

  if (!fs::is_directory(input)) throw ParameterError("degrade: not a directory: " + input.string());
  std::vector<fs::path> images;
  for (const auto& e : fs::directory_iterator(input)) {
    if (e.is_regular_file() && e.path().extension() == ".png") images.push_back(e.path());
  }
  std::sort(images.begin(), images.end());
  if (images.empty()) throw ParameterError("degrade: no .png images in " + input.string());

  OutputLock lock(output);
  fs::create_directories(output / "low");
  Rng rng(a.seed);
  Manifest m;
  m.split = a.split;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const fs::path& src = images[i];
    DegradeParams p;
    p.exposure_factor = a.exposure_factor ? *a.exposure_factor
                                          : sample_exposure_factor(rng, a.factor_low, a.factor_high);
    p.shot_coeff = a.shot;
    p.read_coeff = a.read;
    p.seed = a.seed;
    p.image_index = i;
    const fs::path dst = output / "low" / src.filename();
    save_image(degrade(load_rgb(src), p), dst);
    ManifestRow row;
    row.id = src.stem().string();
    row.rgb_low = dst;
    row.rgb_ref = src;
    row.thermal = thermal_dir / src.filename();
    row.exposure_factor = p.exposure_factor;
    if (!fs::exists(row.thermal)) {
      err << "warning: no thermal frame " << row.thermal.string() << '\n';
    }
    m.rows.push_back(std::move(row));
  }
  snapshot_json(j, output);
  write_manifest(output / "manifest.jsonl", m);
  out << "degraded " << images.size() << " image(s) -> " << (output / "manifest.jsonl").string()
      << '\n';
  return kExitOk;
}

int cmd_ablate(const Overrides& o, std::ostream& out) {
  const RunConfig base = resolve(o);
  if (base.train_manifest.empty() || base.test_manifest.empty()) {
    throw ParameterError("ablate: both a training and a test manifest are required");
  }
  const std::string hash = config_hash(base);
  print_hash(out, hash);
  const Manifest train_m = load_manifest(base.train_manifest);
  const Manifest test_m = load_manifest(base.test_manifest);
  OutputLock lock(base.output_dir);
  snapshot_config(base, base.output_dir);

  const EvalReport baseline = evaluate(
      test_m, [](const Image& rgb, const ThermalImage&) { return rgb; }, "input", hash);
  baseline.write_csv(base.output_dir / "report_input.csv");

  std::ostringstream table;
  table << "# config_hash: " << hash << '\n';
  table << "# input_psnr_db: " << format_metric(baseline.mean_psnr_db)
        << " input_ssim: " << format_metric(baseline.mean_ssim) << '\n';
  table << "mode,psnr_db,ssim\n";
  for (FusionMode mode : {FusionMode::self_only, FusionMode::concat4, FusionMode::cross_attention}) {
    RunConfig c = base;
    c.train.ablation_mode = mode;
    c.model.mode = mode;
    const fs::path dir = base.output_dir / to_string(mode);
    out << "training " << to_string(mode) << '\n';
    const auto res = train(train_m, c.model, c.train, dir);
    const RtxNet net = network_from_checkpoint(load_checkpoint(res.checkpoint));
    const EvalReport r = evaluate(
        test_m, [&](const Image& rgb, const ThermalImage& t) { return net.enhance(rgb, t); },
        to_string(mode), config_hash(c));
    r.write_csv(dir / "report.csv");
    table << to_string(mode) << ',' << format_metric(r.mean_psnr_db) << ','
          << format_metric(r.mean_ssim) << '\n';
  }
  const fs::path table_path = base.output_dir / "ablation.csv";
  std::ofstream f(table_path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + table_path.string());
  f << table.str();
  out << table.str();
  return kExitOk;
}

struct GradArgs {
  double tolerance = 1e-4, step = 1e-5;
  std::size_t entries = 64;
  int height = 8, width = 8;
  std::optional<std::string> fault, report;
};

int cmd_gradcheck(const Overrides& o, const GradArgs& g, std::ostream& out) {
  const RunConfig c = resolve(o);
  nlohmann::json j = to_json(c);
  j["gradcheck"] = {{"tolerance", g.tolerance}, {"step", g.step}, {"entries", g.entries},
                    {"height", g.height},       {"width", g.width},
                    {"fault", g.fault.value_or("")}};
  print_hash(out, json_hash(j));
  GradCheckOptions opts;
  opts.tolerance = g.tolerance;
  opts.step = g.step;
  opts.entries_per_parameter = g.entries;
  opts.seed = c.train.seed;
  opts.height = g.height;
  opts.width = g.width;
  opts.fault_block = g.fault;
  const auto t0 = std::chrono::steady_clock::now();
  const GradCheckReport report = gradient_check_model(c.model, opts);
  const double s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string text = report.to_text();
  out << text;
  if (g.report) {
    std::ofstream f(*g.report, std::ios::trunc);
    if (!f) throw IoError("cannot write " + *g.report);
    f << text;
  }
  out << (report.passed() ? "PASS" : "FAIL") << " worst " << report.worst() << " tolerance "
      << g.tolerance << " (" << std::fixed << std::setprecision(1) << s << " s)\n";
  return report.passed() ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"RGB-thermal low-light enhancement"};
  app.require_subcommand(1);

  Overrides train_o, ablate_o, grad_o;
  auto* train_cmd = app.add_subcommand("train", "train a network from a manifest");
  add_model_flags(train_cmd, train_o);
  add_train_flags(train_cmd, train_o);
  train_cmd->add_option("--manifest", train_o.train_manifest, "training manifest (JSONL)");

  EnhanceArgs en;
  auto* enhance_cmd = app.add_subcommand("enhance", "enhance one RGB-thermal pair");
  enhance_cmd->add_option("--checkpoint", en.checkpoint)->required();
  enhance_cmd->add_option("--rgb", en.rgb)->required();
  enhance_cmd->add_option("--thermal", en.thermal)->required();
  enhance_cmd->add_option("--output", en.output)->required();
  enhance_cmd->add_flag("--unit-illumination", en.unit_illumination, "force M = 1");
  enhance_cmd->add_option("--threads", en.threads);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "PSNR/SSIM report over a manifest");
  eval_cmd->alias("eval");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--manifest", ev.manifest)->required();
  eval_cmd->add_option("--output", ev.output, "report CSV")->required();
  eval_cmd->add_option("--label", ev.label, "method label written to the report");
  eval_cmd->add_flag("--unit-illumination", ev.unit_illumination, "force M = 1");
  eval_cmd->add_option("--threads", ev.threads);

  DegradeArgs dg;
  auto* degrade_cmd = app.add_subcommand("degrade", "simulate low-exposure inputs");
  degrade_cmd->add_option("--input-dir", dg.input_dir, "directory of reference PNGs")->required();
  degrade_cmd->add_option("--output-dir", dg.output_dir);
  degrade_cmd->add_option("--thermal-dir", dg.thermal_dir, "default <input-dir>/thermal");
  degrade_cmd->add_option("--seed", dg.seed);
  degrade_cmd->add_option("--exposure-factor", dg.exposure_factor, "fixed factor for every image");
  degrade_cmd->add_option("--factor-low", dg.factor_low);
  degrade_cmd->add_option("--factor-high", dg.factor_high);
  degrade_cmd->add_option("--shot-coeff", dg.shot);
  degrade_cmd->add_option("--read-coeff", dg.read);
  degrade_cmd->add_flag("--no-noise", dg.no_noise);
  degrade_cmd->add_option("--split", dg.split);

  auto* ablate_cmd = app.add_subcommand("ablate", "train and compare the three fusion modes");
  add_model_flags(ablate_cmd, ablate_o);
  add_train_flags(ablate_cmd, ablate_o);
  ablate_cmd->add_option("--train-manifest", ablate_o.train_manifest);
  ablate_cmd->add_option("--test-manifest", ablate_o.test_manifest);

  GradArgs ga;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  add_model_flags(grad_cmd, grad_o);
  grad_cmd->add_option("--tolerance", ga.tolerance);
  grad_cmd->add_option("--step", ga.step);
  grad_cmd->add_option("--entries", ga.entries, "entries per parameter, 0 = all");
  grad_cmd->add_option("--height", ga.height);
  grad_cmd->add_option("--width", ga.width);
  grad_cmd->add_option("--inject-fault", ga.fault, "attention block prefix to corrupt");
  grad_cmd->add_option("--report", ga.report, "also write the report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_o, out);
    if (*enhance_cmd) return cmd_enhance(en, out);
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*degrade_cmd) return cmd_degrade(dg, out, err);
    if (*ablate_cmd) return cmd_ablate(ablate_o, out);
    if (*grad_cmd) return cmd_gradcheck(grad_o, ga, out);
  } catch (const TrainingAbort& e) {
    err << "error: training aborted: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const RangeError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace rtx
