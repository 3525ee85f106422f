// Command-line front end: degrade, train-fpn, train-psfr, parse, restore, evaluate.
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "psfr/checkpoint.hpp"
#include "psfr/dataset.hpp"
#include "psfr/degrade.hpp"
#include "psfr/errors.hpp"
#include "psfr/image.hpp"
#include "psfr/metrics.hpp"
#include "psfr/pipeline.hpp"
#include "psfr/restore.hpp"
#include "psfr/train.hpp"

namespace fs = std::filesystem;
using namespace psfr;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<uint64_t> seed;
  std::string device = "cpu";
  bool deterministic = false;
};

// Machine-readable failure: `error <kind>: <message>` on a single line.
[[noreturn]] void fail(const std::string& kind, const std::string& message) {
  std::string flat = message;
  std::replace(flat.begin(), flat.end(), '\n', ' ');
  std::cerr << "error " << kind << ": " << flat << std::endl;
  std::exit(kind == "usage" ? 2 : 1);
}

PipelineConfig load_config(const GlobalOptions& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  auto config = PipelineConfig::load(g.config);
  if (g.seed) config.train.seed = *g.seed;
  if (g.deterministic) config.train.deterministic = true;
  return config;
}

std::set<int64_t> parse_levels(const std::string& text, int64_t num_levels) {
  std::set<int64_t> levels;
  if (text.empty()) return levels;
  if (text == "all") {
    for (int64_t i = 1; i <= num_levels; ++i) levels.insert(i);
    return levels;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t used = 0;
    int64_t v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.empty()) throw std::invalid_argument("--zero-levels: bad entry '" + item + "'");
    if (v < 1 || v > num_levels) {
      throw std::invalid_argument("--zero-levels: level " + item + " outside 1.." + std::to_string(num_levels));
    }
    levels.insert(v);
  }
  return levels;
}

void run_degrade(const fs::path& in, const fs::path& out, uint64_t seed, const std::string& params_json) {
  std::optional<degrade::DegradationParams> fixed;
  if (!params_json.empty()) {
    std::ifstream f(params_json);
    if (!f) throw IoError(params_json, "cannot open");
    try {
      fixed = nlohmann::json::parse(f).get<degrade::DegradationParams>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError(params_json, e.what());
    }
  }
  const auto files = list_pngs(in);
  if (files.empty()) throw IoError(in, "no PNG images found");
  fs::create_directories(out);
  const auto manifest_path = out / "manifest.jsonl";
  std::ofstream manifest(manifest_path);
  if (!manifest) throw IoError(manifest_path, "cannot open for writing");
  for (size_t i = 0; i < files.size(); ++i) {
    const auto hq = read_png(files[i]);
    if (hq.height() != hq.width()) throw IoError(files[i], "image must be square");
    // Each file gets its own stream so results do not depend on directory order beyond the index.
    const auto params = fixed ? *fixed : degrade::sample_params(seed * 1000003ULL + i);
    const auto lq = degrade::degrade(hq, params, hq.height());
    write_png(out / files[i].filename(), lq);
    nlohmann::json record = params;
    record["file"] = files[i].filename().string();
    manifest << record.dump() << '\n';
  }
}

void run_parse(const fs::path& model, const fs::path& in, const fs::path& out) {
  auto fpn = load_fpn(checkpoint::read(model));
  fpn->eval();
  const int res = static_cast<int>(fpn->config().in_resolution);
  const auto files = list_pngs(in);
  if (files.empty()) throw IoError(in, "no PNG images found");
  fs::create_directories(out);
  torch::NoGradGuard no_grad;
  for (const auto& path : files) {
    auto img = read_png(path);
    if (img.height() != res || img.width() != res) img = resize_bicubic(img, res, res);
    auto logits = fpn->forward(to_tensor(img).unsqueeze(0)).logits;
    write_label_png(out / path.filename(), parsing::argmax_labels(logits)[0]);
  }
}

void run_restore(const fs::path& fpn, const fs::path& gen, const fs::path& in, const fs::path& out,
                 bool dump_pyramid, const std::string& zero_levels) {
  Restorer restorer(checkpoint::read(fpn), checkpoint::read(gen));
  const auto levels = parse_levels(zero_levels, restorer.num_levels());
  const auto files = list_pngs(in);
  if (files.empty()) throw IoError(in, "no PNG images found");
  fs::create_directories(out);
  for (const auto& path : files) {
    auto result = restorer.restore(read_png(path), levels);
    const auto stem = path.stem().string();
    write_png(out / path.filename(), result.hq);
    write_label_png(out / (stem + "_labels.png"), result.labels);
    if (!dump_pyramid) continue;
    const auto dir = out / (stem + "_pyramid");
    fs::create_directories(dir);
    for (size_t i = 0; i < result.pyramid.size(); ++i) {
      const auto level = std::to_string(i + 1);
      write_png(dir / ("lq_" + level + ".png"), to_image(result.pyramid.lq[i][0]));
      // An all-zero (ablated) parse level has no argmax; it is written as background.
      write_label_png(dir / ("parse_" + level + ".png"), result.pyramid.parse[i][0].argmax(0));
    }
  }
}

void run_evaluate(const std::string& pred, const std::string& gt, const std::string& report,
                  const std::string& pred_features, const std::string& gt_features) {
  if (report.empty()) throw std::invalid_argument("--report is required");
  std::ofstream csv(report);
  if (!csv) throw IoError(report, "cannot open for writing");
  csv.precision(10);
  if (!pred.empty() || !gt.empty()) {
    if (pred.empty() || gt.empty()) throw std::invalid_argument("--pred and --gt must be given together");
    const auto files = list_pngs(pred);
    if (files.empty()) throw IoError(pred, "no PNG images found");
    csv << "file,psnr,ssim,ms_ssim\n";
    double sum_psnr = 0, sum_ssim = 0, sum_ms = 0;
    int64_t n_ms = 0;
    for (const auto& path : files) {
      const auto gt_path = fs::path(gt) / path.filename();
      if (!fs::exists(gt_path)) throw IoError(gt_path, "missing ground truth for " + path.string());
      const auto a = read_png(path), b = read_png(gt_path);
      if (a.height() != b.height() || a.width() != b.width()) throw IoError(path, "size differs from ground truth");
      const double p = metrics::psnr(a, b), s = metrics::ssim(a, b);
      const bool ms_ok = std::min(a.height(), a.width()) >= metrics::kMsSsimMinSide;
      const double m = ms_ok ? metrics::ms_ssim(a, b) : std::nan("");
      csv << path.filename().string() << ',' << p << ',' << s << ',' << (ms_ok ? std::to_string(m) : "") << '\n';
      sum_psnr += p;
      sum_ssim += s;
      if (ms_ok) {
        sum_ms += m;
        ++n_ms;
      }
    }
    const double n = static_cast<double>(files.size());
    csv << "mean," << sum_psnr / n << ',' << sum_ssim / n << ',' << (n_ms ? std::to_string(sum_ms / n_ms) : "")
        << '\n';
  }
  if (!pred_features.empty() || !gt_features.empty()) {
    if (pred_features.empty() || gt_features.empty()) {
      throw std::invalid_argument("--pred-features and --gt-features must be given together");
    }
    const auto s1 = metrics::compute_stats(metrics::read_features(pred_features));
    const auto s2 = metrics::compute_stats(metrics::read_features(gt_features));
    csv << "frechet_distance," << metrics::frechet_distance(s1, s2) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PSFR-GAN blind face restoration"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "Pipeline configuration (INI)");
  app.add_option("--seed", g.seed, "Overrides the configured seed");
  app.add_option("--device", g.device, "Compute device (only 'cpu' is supported)");
  app.add_flag("--deterministic", g.deterministic, "Single-threaded deterministic kernels");

  std::string in, out, params_json;
  uint64_t degrade_seed = 0;
  auto* degrade_cmd = app.add_subcommand("degrade", "Synthesize LQ images from HQ images");
  degrade_cmd->add_option("--in", in, "HQ image directory")->required();
  degrade_cmd->add_option("--out", out, "Output directory")->required();
  degrade_cmd->add_option("--seed", degrade_seed, "Sampling seed")->required();
  degrade_cmd->add_option("--params-json", params_json, "Apply these parameters to every image");

  std::string config_sub, resume;
  auto* train_fpn_cmd = app.add_subcommand("train-fpn", "Train the face parsing network");
  train_fpn_cmd->add_option("--config", config_sub, "Pipeline configuration (INI)");
  train_fpn_cmd->add_option("--resume", resume, "Continue from a checkpoint");
  auto* train_psfr_cmd = app.add_subcommand("train-psfr", "Train the PSFR-GAN generator and discriminator");
  train_psfr_cmd->add_option("--config", config_sub, "Pipeline configuration (INI)");
  train_psfr_cmd->add_option("--resume", resume, "Continue from a checkpoint");

  std::string model;
  auto* parse_cmd = app.add_subcommand("parse", "Predict parsing maps with a trained FPN");
  parse_cmd->add_option("--model", model, "FPN checkpoint")->required();
  parse_cmd->add_option("--in", in, "Input image directory")->required();
  parse_cmd->add_option("--out", out, "Label map output directory")->required();

  std::string fpn_ckpt, gen_ckpt, zero_levels;
  bool dump_pyramid = false;
  auto* restore_cmd = app.add_subcommand("restore", "Restore LQ faces");
  restore_cmd->add_option("--fpn", fpn_ckpt, "FPN checkpoint")->required();
  restore_cmd->add_option("--gen", gen_ckpt, "PSFR checkpoint")->required();
  restore_cmd->add_option("--in", in, "LQ image directory")->required();
  restore_cmd->add_option("--out", out, "Output directory")->required();
  restore_cmd->add_flag("--dump-pyramid", dump_pyramid, "Write every input pyramid level");
  restore_cmd->add_option("--zero-levels", zero_levels, "Comma-separated 1-based levels to zero, or 'all'");

  std::string pred, gt, report, pred_features, gt_features;
  auto* eval_cmd = app.add_subcommand("evaluate", "PSNR / SSIM / MS-SSIM and Frechet distance");
  eval_cmd->add_option("--pred", pred, "Restored image directory");
  eval_cmd->add_option("--gt", gt, "Ground-truth image directory");
  eval_cmd->add_option("--report", report, "CSV report path")->required();
  eval_cmd->add_option("--pred-features", pred_features, "Feature file of restored images");
  eval_cmd->add_option("--gt-features", gt_features, "Feature file of ground-truth images");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail("usage", e.what());
  }

  try {
    if (g.device != "cpu") throw std::invalid_argument("unsupported device '" + g.device + "' (only cpu)");
    if (!config_sub.empty()) g.config = config_sub;
    const bool training = train_fpn_cmd->parsed() || train_psfr_cmd->parsed();
    if (g.deterministic) enable_deterministic_mode();

    if (degrade_cmd->parsed()) {
      run_degrade(in, out, degrade_seed, params_json);
    } else if (training) {
      auto config = load_config(g);
      if (config.train.deterministic) enable_deterministic_mode();
      auto data = FaceDataset::from_config(config);
      RunOptions options{config.output.dir, std::nullopt, &std::cout};
      if (!resume.empty()) options.resume = resume;
      if (train_fpn_cmd->parsed()) {
        train_fpn(config, data, options);
      } else {
        std::optional<checkpoint::Checkpoint> fpn;
        if (!config.output.fpn_checkpoint.empty()) fpn = checkpoint::read(config.output.fpn_checkpoint);
        train_psfr(config, data, std::move(fpn), options);
      }
    } else if (parse_cmd->parsed()) {
      run_parse(model, in, out);
    } else if (restore_cmd->parsed()) {
      run_restore(fpn_ckpt, gen_ckpt, in, out, dump_pyramid, zero_levels);
    } else if (eval_cmd->parsed()) {
      run_evaluate(pred, gt, report, pred_features, gt_features);
    }
  } catch (const ConfigError& e) {
    fail("config", e.what());
  } catch (const CheckpointError& e) {
    fail("checkpoint", e.what());
  } catch (const IoError& e) {
    fail("io", e.what());
  } catch (const std::invalid_argument& e) {
    fail("invalid-argument", e.what());
  } catch (const std::exception& e) {
    fail("internal", e.what());
  }
  return 0;
}
