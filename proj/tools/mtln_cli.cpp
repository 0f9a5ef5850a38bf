#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtln/config.hpp"
#include "mtln/data.hpp"
#include "mtln/ellipse.hpp"
#include "mtln/error.hpp"
#include "mtln/image_io.hpp"
#include "mtln/metrics.hpp"
#include "mtln/random.hpp"
#include "mtln/train.hpp"

namespace fs = std::filesystem;
using namespace mtln;

namespace {

enum ExitCode { kOk = 0, kRuntimeError = 1, kConfigError = 2, kDiverged = 3 };

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig load_config(const CommonOptions& common) {
  RunConfig c = common.config.empty() ? RunConfig{} : load_run_config(common.config);
  if (common.seed) c.seed = *common.seed;
  c.validate();
  return c;
}

fs::path out_dir(const CommonOptions& common, const fs::path& fallback) {
  const fs::path dir = common.out.empty() ? fallback : fs::path(common.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
  return dir;
}

fs::path manifest_dir(const fs::path& manifest) {
  const fs::path parent = manifest.parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::string phantom_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "phantom_%05zu", index);
  return buf;
}

void copy_images(const DatasetManifest& manifest, const fs::path& from, const fs::path& to) {
  if (fs::equivalent(from, to)) return;
  for (const auto& r : manifest.records) {
    for (const std::string& name : {r.filename, mask_filename(r.filename)}) {
      if (fs::exists(from / name)) fs::copy_file(from / name, to / name, fs::copy_options::overwrite_existing);
    }
  }
}

// ---------------------------------------------------------------------------

int cmd_phantom(const CommonOptions& common, std::optional<int> count, std::optional<int> height,
                std::optional<int> width) {
  RunConfig config = load_config(common);
  if (count) config.data.count = *count;
  if (height) config.data.height = *height;
  if (width) config.data.width = *width;
  config.validate();
  const fs::path dir = out_dir(common, config.paths.data_dir);

  DatasetManifest manifest;
  manifest.seed = config.seed;
  const std::uint64_t base = derive_seed(config.seed, "phantom");
  for (int i = 0; i < config.data.count; ++i) {
    const Sample s = generate_phantom(derive_seed(base, static_cast<std::uint64_t>(i)), config.data.height,
                                      config.data.width, phantom_id(static_cast<std::size_t>(i)));
    manifest.records.push_back(save_sample(s, dir));
  }
  write_manifest(dir / "manifest.csv", manifest);
  std::cout << "wrote " << manifest.records.size() << " phantoms to " << (dir / "manifest.csv").string() << '\n';
  return kOk;
}

int cmd_augment(const CommonOptions& common, std::string manifest_path) {
  const RunConfig config = load_config(common);
  if (manifest_path.empty()) manifest_path = config.paths.manifest;
  const fs::path src = manifest_dir(manifest_path);
  const DatasetManifest manifest = read_manifest(manifest_path);
  const fs::path dir = out_dir(common, src);

  std::vector<Sample> bases;
  std::map<std::string, std::string> split_of;
  for (const auto& r : manifest.records) {
    bases.push_back(load_sample(r, src));
    split_of[lineage_base(r.lineage)] = r.split;
  }
  AugmentStats stats;
  const std::vector<Sample> variants = augment_dataset(bases, &stats);

  DatasetManifest out;
  out.seed = manifest.seed;
  for (const auto& s : variants) out.records.push_back(save_sample(s, dir, split_of[lineage_base(s.lineage)]));
  write_manifest(dir / "manifest.csv", out);
  std::cout << "bases " << stats.bases << ", candidates " << stats.candidates << ", dropped " << stats.dropped
            << ", kept " << out.records.size() << '\n';
  return kOk;
}

int cmd_split(const CommonOptions& common, std::string manifest_path) {
  const RunConfig config = load_config(common);
  if (manifest_path.empty()) manifest_path = config.paths.manifest;
  const fs::path src = manifest_dir(manifest_path);
  const DatasetManifest split = split_dataset(read_manifest(manifest_path), config.seed);
  const fs::path dir = out_dir(common, src);
  copy_images(split, src, dir);
  write_manifest(dir / "manifest.csv", split);

  std::map<std::string, std::size_t> counts;
  for (const auto& r : split.records) ++counts[r.split];
  std::cout << "train " << counts["train"] << ", val " << counts["val"] << ", test " << counts["test"] << '\n';
  return kOk;
}

int cmd_train(const CommonOptions& common, std::string manifest_path) {
  const RunConfig config = load_config(common);
  if (manifest_path.empty()) manifest_path = config.paths.manifest;
  const fs::path src = manifest_dir(manifest_path);
  const DatasetManifest manifest = read_manifest(manifest_path);
  const std::vector<Sample> train_set = load_split(manifest, src, "train");
  const std::vector<Sample> val_set = load_split(manifest, src, "val");
  if (train_set.empty()) throw InvalidArgument("manifest '" + manifest_path + "' has no train split");
  const fs::path dir = out_dir(common, manifest_dir(config.paths.checkpoint));

  const TrainResult result = train(config.resolved_train(), train_set, val_set, [](const EpochLog& e) {
    std::cout << "epoch " << e.epoch << " train " << format_double(e.train_loss) << " val "
              << format_double(e.val_loss) << " dsc " << format_double(e.val_dsc) << '\n';
  });
  save_checkpoint(dir / "best.ckpt", result.best);
  save_checkpoint(dir / "last.ckpt", result.last);
  std::ofstream log = open_output(dir / "loss_log.csv");
  write_loss_log(log, result.log);
  std::cout << "best epoch " << result.best.epoch << ", checkpoint " << (dir / "best.ckpt").string() << '\n';
  return kOk;
}

int cmd_eval(const CommonOptions& common, std::string manifest_path, std::string checkpoint_path,
             const std::string& split) {
  const RunConfig config = load_config(common);
  if (manifest_path.empty()) manifest_path = config.paths.manifest;
  if (checkpoint_path.empty()) checkpoint_path = config.paths.checkpoint;
  const Checkpoint checkpoint = load_checkpoint(checkpoint_path);
  const DatasetManifest manifest = read_manifest(manifest_path);
  const std::vector<Sample> samples = load_split(manifest, manifest_dir(manifest_path), split);
  if (samples.empty()) throw InvalidArgument("split '" + split + "' is empty in '" + manifest_path + "'");
  const fs::path dir = out_dir(common, manifest_dir(checkpoint_path));

  const EvaluationResult result = evaluate_model(checkpoint, samples);
  std::ofstream metrics = open_output(dir / "metrics.csv");
  write_metrics_csv(metrics, result.reports);
  std::ofstream ellipses = open_output(dir / "ellipses.csv");
  write_ellipse_csv(ellipses, result.ellipses);
  std::string summary = format_summary(result.summary);
  if (result.mean_ellipse_mse) summary += "ellipse normalized MSE: " + format_double(*result.mean_ellipse_mse) + '\n';
  else summary += "ellipse normalized MSE: absent\n";
  std::ofstream summary_file = open_output(dir / "summary.txt");
  summary_file << summary;
  std::cout << summary;
  return kOk;
}

int cmd_infer(const CommonOptions& common, std::string checkpoint_path, const std::vector<std::string>& images,
              double pixel_size_mm) {
  const RunConfig config = load_config(common);
  if (checkpoint_path.empty()) checkpoint_path = config.paths.checkpoint;
  if (!(pixel_size_mm >= kMinPixelSizeMm && pixel_size_mm <= kMaxPixelSizeMm))
    throw ConfigError("--pixel-size must lie in [" + format_double(kMinPixelSizeMm) + ", " +
                      format_double(kMaxPixelSizeMm) + "] mm");
  const Checkpoint checkpoint = load_checkpoint(checkpoint_path);
  const fs::path dir = out_dir(common, manifest_dir(checkpoint_path) / "infer");

  std::ofstream csv = open_output(dir / "predictions.csv");
  csv << "image,mask,source,cx,cy,a,b,theta,hc_mm\n";
  for (const auto& path : images) {
    Sample s;
    s.id = fs::path(path).stem().string();
    s.image = read_pgm(path);
    const Prediction pred = predict(checkpoint.params, checkpoint.config, s);
    const BinaryMask mask = threshold_mask(pred.probs);
    const std::string mask_name = s.id + "_pred_mask.pgm";
    write_mask_pgm(dir / mask_name, mask);

    std::optional<EllipseParams> e;
    std::string source = "none";
    if (pred.ellipse) {
      e = canonicalize(*pred.ellipse);
      source = "head";
    } else {
      try {
        e = fit_ellipse(mask);
        source = "mask-fit";
      } catch (const Error&) {
      }
    }
    csv << path << ',' << mask_name << ',' << source;
    if (e && e->a > 0.0 && e->b > 0.0) {
      csv << ',' << format_double(e->cx) << ',' << format_double(e->cy) << ',' << format_double(e->a) << ','
          << format_double(e->b) << ',' << format_double(e->theta) << ','
          << format_double(circumference_mm(*e, pixel_size_mm)) << '\n';
    } else {
      csv << ",,,,,,\n";
    }
  }
  std::cout << "wrote " << images.size() << " predictions to " << (dir / "predictions.csv").string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MTLN: multi-task fetal-head segmentation and ellipse regression"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.footer(
      "Exit codes: 0 success, 1 runtime or input error, 2 invalid configuration or arguments,\n"
      "3 training diverged (non-finite loss or gradient).");

  CommonOptions common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON run configuration")->default_str("built-in defaults");
    sub->add_option("--seed", common.seed, "Seed for all randomness, overrides the config seed")
        ->default_str("config seed (0)");
    sub->add_option("--out", common.out, "Output directory")->default_str(sub->get_name() == "phantom"
                                                                             ? "paths.data_dir (data)"
                                                                             : "see command");
  };

  std::optional<int> count, height, width;
  CLI::App* phantom = app.add_subcommand("phantom", "Generate synthetic phantoms and a manifest");
  add_common(phantom);
  phantom->get_option("--out")->description("Output directory for images and manifest.csv");
  phantom->add_option("-n,--count", count, "Number of phantoms")->default_str("data.count (999)");
  phantom->add_option("--height", height, "Image height in pixels")->default_str("data.height (128)");
  phantom->add_option("--width", width, "Image width in pixels")->default_str("data.width (128)");

  std::string manifest;
  const std::string manifest_default = "paths.manifest (data/manifest.csv)";
  CLI::App* augment = app.add_subcommand("augment", "Add flipped and rotated variants to a manifest");
  add_common(augment);
  augment->get_option("--out")->description("Output directory for variants and manifest.csv")->default_str(
      "manifest directory");
  augment->add_option("--manifest", manifest, "Input manifest of original images")->default_str(manifest_default);

  CLI::App* split = app.add_subcommand("split", "Assign train/val/test splits by base image");
  add_common(split);
  split->get_option("--out")->description("Output directory for manifest.csv")->default_str("manifest directory");
  split->add_option("--manifest", manifest, "Input manifest")->default_str(manifest_default);

  CLI::App* train_cmd = app.add_subcommand("train", "Train on the train split, select on the val split");
  add_common(train_cmd);
  train_cmd->get_option("--out")
      ->description("Output directory for best.ckpt, last.ckpt and loss_log.csv")
      ->default_str("directory of paths.checkpoint (run)");
  train_cmd->add_option("--manifest", manifest, "Split manifest")->default_str(manifest_default);

  std::string checkpoint;
  std::string eval_split = "test";
  const std::string checkpoint_default = "paths.checkpoint (run/best.ckpt)";
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  add_common(eval);
  eval->get_option("--out")
      ->description("Output directory for metrics.csv, ellipses.csv and summary.txt")
      ->default_str("checkpoint directory");
  eval->add_option("--manifest", manifest, "Split manifest")->default_str(manifest_default);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->default_str(checkpoint_default);
  eval->add_option("--split", eval_split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test", "none"}));

  std::vector<std::string> images;
  double pixel_size = 0.1;
  CLI::App* infer = app.add_subcommand("infer", "Predict masks, ellipses and HC for PGM images");
  add_common(infer);
  infer->get_option("--out")
      ->description("Output directory for mask PGMs and predictions.csv")
      ->default_str("checkpoint directory/infer");
  infer->add_option("--checkpoint", checkpoint, "Checkpoint file")->default_str(checkpoint_default);
  infer->add_option("--pixel-size", pixel_size, "Pixel size in mm for HC");
  infer->add_option("images", images, "Input P5 PGM images")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*phantom) return cmd_phantom(common, count, height, width);
    if (*augment) return cmd_augment(common, manifest);
    if (*split) return cmd_split(common, manifest);
    if (*train_cmd) return cmd_train(common, manifest);
    if (*eval) return cmd_eval(common, manifest, checkpoint, eval_split);
    if (*infer) return cmd_infer(common, checkpoint, images, pixel_size);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kRuntimeError;
}
