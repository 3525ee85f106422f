#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "psfr/config.hpp"
#include "psfr/discriminator.hpp"
#include "psfr/generator.hpp"
#include "psfr/losses.hpp"
#include "psfr/parsing.hpp"

namespace psfr {

enum class LabelSource { kGroundTruth, kFpn };

struct TrainConfig {
  double lr_g = 1e-4;
  double lr_d = 4e-4;
  double adam_beta1_psfr = 0.5;
  double adam_beta2 = 0.999;
  double adam_beta1_fpn = 0.9;
  double lr_fpn = 2e-4;
  int64_t batch_psfr = 4;
  int64_t batch_fpn = 8;
  int64_t resolution = 512;
  uint64_t seed = 0;
  int64_t max_steps = 1000;
  int64_t log_every = 1;
  int64_t checkpoint_every = 0;  // 0 = only at the end
  LabelSource label_source = LabelSource::kGroundTruth;
  bool deterministic = false;

  void validate() const;
};

struct ExtractorConfig {
  std::string kind = "random";  // "random" or "vgg19"
  std::vector<int64_t> channels = {32, 64, 64};
  uint64_t seed = 1234;
  std::string weights;  // vgg19 weights in checkpoint format
};

struct DataConfig {
  std::string hq_dir;
  std::string label_dir;
  int64_t synthetic_count = 0;  // > 0 selects the built-in synthetic faces
  std::vector<int64_t> synthetic_classes = {0, 1, 2, 4, 5, 10, 13};
  uint64_t synthetic_seed = 7;
};

struct OutputConfig {
  std::string dir = "runs/default";
  std::string fpn_checkpoint;  // FPN used when label_source = fpn
};

/// Everything a training run needs; parsed from a sectioned key = value file.
struct PipelineConfig {
  TrainConfig train;
  losses::LossWeights loss;
  generator::GenConfig generator;
  discriminator::DiscConfig discriminator;
  parsing::FpnConfig fpn;
  ExtractorConfig extractor;
  DataConfig data;
  OutputConfig output;

  /// Checks cross-section consistency (resolutions agree).
  void validate() const;

  IniDocument to_ini() const;
  static PipelineConfig from_ini(const IniDocument& doc);
  static PipelineConfig load(const std::filesystem::path& path);
};

/// Sets single-threaded, deterministic tensor kernels.
void enable_deterministic_mode();

}  // namespace psfr
