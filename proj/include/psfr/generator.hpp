#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "psfr/config.hpp"
#include "psfr/spectral_norm.hpp"

namespace psfr::generator {

struct GenConfig {
  int64_t base_resolution = 16;
  int64_t num_blocks = 6;
  std::vector<int64_t> channel_schedule = {512, 512, 256, 128, 64, 32};
  int64_t const_channels = 512;
  int64_t style_channels = 64;
  double leaky_slope = 0.2;

  /// Side length of the final feature map and of the output image.
  int64_t output_resolution() const { return base_resolution << (num_blocks - 1); }
  /// Side length of F_i for i in [1, num_blocks].
  int64_t level_resolution(int64_t i) const { return base_resolution << (i - 1); }

  void validate() const;
  KeyValues to_map() const;
  static GenConfig from_map(const KeyValues& kv);
};

/// One (LQ image, soft one-hot parsing map) pair per generator scale, coarse to fine.
struct InputPyramid {
  std::vector<torch::Tensor> lq;     // B x 3 x H_i x W_i
  std::vector<torch::Tensor> parse;  // B x 19 x H_i x W_i

  size_t size() const { return lq.size(); }
  /// Replaces both tensors of the given 1-based levels with zeros.
  InputPyramid with_zeroed_levels(const std::set<int64_t>& levels) const;
};

/// B x H x W integer labels -> B x 19 x H x W one-hot (dtype of `like`).
torch::Tensor one_hot(const torch::Tensor& labels, const torch::TensorOptions& options);

/// Bicubic (antialiased) resize of an NCHW tensor; identity when the size already matches.
torch::Tensor resize_bicubic(const torch::Tensor& x, int64_t side);

InputPyramid build_input_pyramid(const torch::Tensor& lq, const torch::Tensor& labels,
                                 const GenConfig& config);

struct StyleParams {
  torch::Tensor scale;  // y_s
  torch::Tensor shift;  // y_b
};

/// Lightweight modulation network: two shared 3x3 convolutions followed by
/// separate 3x3 heads for scale and shift.
class StyleNetImpl : public torch::nn::Module {
 public:
  StyleNetImpl(int64_t feature_channels, int64_t hidden_channels, double leaky_slope = 0.2);

  StyleParams forward(const torch::Tensor& lq, const torch::Tensor& parse);

  SNConv2d trunk1{nullptr}, trunk2{nullptr}, scale_head{nullptr}, shift_head{nullptr};

 private:
  double slope_;
};
TORCH_MODULE(StyleNet);

inline constexpr double kInstanceEps = 1e-5;

/// Per-sample, per-channel spatial normalization followed by y_s * F_hat + y_b.
torch::Tensor style_transform(const torch::Tensor& features, const StyleParams& style,
                              double eps = kInstanceEps);

/// Pre-activation residual block; optionally upsamples by 2 (nearest) first.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(int64_t in_channels, int64_t out_channels, bool upsample, double leaky_slope);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  bool upsample_;
  double slope_;
  SNConv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
};
TORCH_MODULE(ResidualBlock);

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GenConfig config);

  /// Restores B x 3 x R x R LQ input guided by B x R x R labels.
  torch::Tensor forward(const torch::Tensor& lq, const torch::Tensor& labels);

  /// Runs the generator on a prepared pyramid. If `trace` is given, it
  /// receives F_1 .. F_n.
  torch::Tensor forward_pyramid(const InputPyramid& pyramid, std::vector<torch::Tensor>* trace = nullptr);

  const GenConfig& config() const { return config_; }

  torch::Tensor constant;  // F_0, 1 x C x base x base

 private:
  GenConfig config_;
  torch::nn::ModuleList blocks_{nullptr};
  torch::nn::ModuleList styles_{nullptr};
  SNConv2d to_rgb_{nullptr};
};
TORCH_MODULE(Generator);

}  // namespace psfr::generator
