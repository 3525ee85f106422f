#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <torch/torch.h>

#include "psfr/image.hpp"

namespace psfr::parsing {

struct FpnConfig {
  int64_t in_resolution = 512;
  int64_t num_classes = kNumClasses;
  int64_t base_channels = 64;
  int64_t max_channels = 512;
  int64_t num_down = 4;
  int64_t num_resblocks = 10;
  int64_t num_up = 4;
  double leaky_slope = 0.2;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static FpnConfig from_map(const std::map<std::string, std::string>& kv);
};

struct FpnOutput {
  torch::Tensor logits;    // B x 19 x H x W, un-normalized
  torch::Tensor restored;  // B x 3 x H x W in [-1, 1]
};

/// Encoder / residual trunk / decoder with a parsing head and an image head.
/// Every hidden convolution is followed by BatchNorm and LeakyReLU.
class FaceParsingNetImpl : public torch::nn::Module {
 public:
  explicit FaceParsingNetImpl(FpnConfig config);

  FpnOutput forward(const torch::Tensor& lq);

  const FpnConfig& config() const { return config_; }

 private:
  FpnConfig config_;
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Sequential decoder_{nullptr};
  torch::nn::Conv2d parse_head_{nullptr};
  torch::nn::Conv2d image_head_{nullptr};
};
TORCH_MODULE(FaceParsingNet);

struct FpnLoss {
  torch::Tensor parse;  // mean softmax cross-entropy
  torch::Tensor pix;    // mean squared error
  torch::Tensor total;  // parse + pix
};

/// Multi-task objective; throws std::invalid_argument on labels outside [0, 18].
FpnLoss fpn_loss(const torch::Tensor& logits, const torch::Tensor& restored,
                 const torch::Tensor& gt_labels, const torch::Tensor& gt_hq);

/// Per-pixel argmax over the class axis; ties go to the lowest class index.
torch::Tensor argmax_labels(const torch::Tensor& logits);

/// Fraction of pixels where prediction equals ground truth.
double pixel_accuracy(const torch::Tensor& predicted, const torch::Tensor& truth);

}  // namespace psfr::parsing
