#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "psfr/checkpoint.hpp"
#include "psfr/dataset.hpp"
#include "psfr/degrade.hpp"
#include "psfr/discriminator.hpp"
#include "psfr/generator.hpp"
#include "psfr/losses.hpp"
#include "psfr/parsing.hpp"
#include "psfr/pipeline.hpp"

namespace psfr {

/// Degraded copies of a batch of dataset entries.
struct TrainingBatch {
  torch::Tensor hq;      // B x 3 x R x R in [-1, 1]
  torch::Tensor lq;      // B x 3 x R x R in [-1, 1]
  torch::Tensor labels;  // B x R x R
  std::vector<size_t> indices;
  std::vector<degrade::DegradationParams> params;
};

/// Samples `batch` entries and degrades each with freshly drawn parameters.
/// The draw depends only on (seed, step, stream), so resumed runs see the
/// same batches as uninterrupted ones.
TrainingBatch make_training_batch(const FaceDataset& data, int64_t batch, uint64_t seed, int64_t step,
                                  uint64_t stream);

/// Degrades every dataset entry once with parameters drawn from `seed`.
TrainingBatch make_eval_set(const FaceDataset& data, uint64_t seed);

struct FpnStepLog {
  int64_t step = 0;
  double parse = 0, pix = 0, total = 0;
};

class FpnTrainer {
 public:
  FpnTrainer(PipelineConfig config, FaceDataset data);

  FpnStepLog step();
  int64_t steps_done() const { return step_; }

  checkpoint::Checkpoint save() const;
  void load(const checkpoint::Checkpoint& ckpt);

  /// Pixel accuracy of argmax predictions over `set` in inference mode.
  double accuracy(const TrainingBatch& set);

  parsing::FaceParsingNet& model() { return model_; }
  const PipelineConfig& config() const { return config_; }

 private:
  PipelineConfig config_;
  FaceDataset data_;
  parsing::FaceParsingNet model_{nullptr};
  std::unique_ptr<torch::optim::Adam> optimizer_;
  int64_t step_ = 0;
};

struct PsfrStepLog {
  int64_t step = 0;
  double l_ss = 0, l_rec = 0, l_g = 0, l_d = 0, total = 0;
};

class PsfrTrainer {
 public:
  /// `fpn` is required when the config asks for FPN-predicted labels.
  PsfrTrainer(PipelineConfig config, FaceDataset data, std::optional<checkpoint::Checkpoint> fpn = std::nullopt);

  /// One discriminator update followed by one generator update.
  PsfrStepLog step();
  int64_t steps_done() const { return step_; }

  /// Called with "D" and "G" as each update begins.
  void set_phase_hook(std::function<void(const std::string&)> hook) { phase_hook_ = std::move(hook); }

  checkpoint::Checkpoint save() const;
  void load(const checkpoint::Checkpoint& ckpt);

  /// Parsing maps fed to the generator for `lq` (ground truth or FPN argmax).
  torch::Tensor labels_for(const torch::Tensor& lq, const torch::Tensor& gt_labels);

  /// Mean PSNR (dB) of inference-mode restorations against HQ over `set`.
  double restoration_psnr(const TrainingBatch& set);
  /// Semantic style loss of inference-mode restorations over `set`.
  double style_loss(const TrainingBatch& set);

  generator::Generator& generator() { return gen_; }
  discriminator::MultiScaleDiscriminator& discriminator() { return disc_; }
  const PipelineConfig& config() const { return config_; }

 private:
  torch::Tensor restore_eval(const TrainingBatch& set);

  PipelineConfig config_;
  FaceDataset data_;
  generator::Generator gen_{nullptr};
  discriminator::MultiScaleDiscriminator disc_{nullptr};
  losses::FeatureExtractor extractor_;
  parsing::FaceParsingNet fpn_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g_, opt_d_;
  std::function<void(const std::string&)> phase_hook_;
  int64_t step_ = 0;
};

losses::FeatureExtractor make_extractor(const ExtractorConfig& config);

/// Rebuilds an FPN from an "fpn" checkpoint (architecture from its config echo).
parsing::FaceParsingNet load_fpn(const checkpoint::Checkpoint& ckpt);
/// Rebuilds a generator from a "psfr" checkpoint.
generator::Generator load_generator(const checkpoint::Checkpoint& ckpt);

struct RunOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  std::ostream* progress = nullptr;
};

/// Full FPN training run: writes loss.csv and fpn.ckpt into out_dir.
checkpoint::Checkpoint train_fpn(const PipelineConfig& config, const FaceDataset& data, const RunOptions& options);

/// Full PSFR-GAN training run: writes loss.csv and psfr.ckpt into out_dir.
checkpoint::Checkpoint train_psfr(const PipelineConfig& config, const FaceDataset& data,
                                  std::optional<checkpoint::Checkpoint> fpn, const RunOptions& options);

}  // namespace psfr
