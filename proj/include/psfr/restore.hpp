#pragma once

#include <cstdint>
#include <set>

#include <torch/torch.h>

#include "psfr/checkpoint.hpp"
#include "psfr/generator.hpp"
#include "psfr/image.hpp"
#include "psfr/parsing.hpp"

namespace psfr {

struct RestoreResult {
  Image8 hq;
  torch::Tensor labels;  // R x R
  generator::InputPyramid pyramid;  // what the generator actually consumed
};

/// Inference-only pairing of a trained FPN and generator.
class Restorer {
 public:
  /// Throws CheckpointError when the two checkpoints disagree on resolution.
  Restorer(const checkpoint::Checkpoint& fpn, const checkpoint::Checkpoint& gen);

  /// Resizes `lq` (any size) to the model resolution with bicubic
  /// interpolation, predicts its parsing map and restores it. Pyramid levels
  /// listed in `zero_levels` (1-based) are replaced by zeros.
  RestoreResult restore(const Image8& lq, const std::set<int64_t>& zero_levels = {});

  int resolution() const { return static_cast<int>(gen_->config().output_resolution()); }
  int64_t num_levels() const { return gen_->config().num_blocks; }

 private:
  parsing::FaceParsingNet fpn_{nullptr};
  generator::Generator gen_{nullptr};
};

}  // namespace psfr
