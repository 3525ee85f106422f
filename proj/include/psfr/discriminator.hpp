#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "psfr/config.hpp"
#include "psfr/spectral_norm.hpp"

namespace psfr::discriminator {

/// Input downscale factors of the three discriminators, finest first.
inline constexpr std::array<double, 3> kScales = {1.0, 0.5, 0.25};
inline constexpr int kFeatureLayers = 4;

struct DiscConfig {
  int64_t base_channels = 64;
  int64_t max_channels = 512;
  double leaky_slope = 0.2;

  void validate() const;
  KeyValues to_map() const;
  static DiscConfig from_map(const KeyValues& kv);
};

struct DiscOutput {
  torch::Tensor score;                 // B x 1 x h x w patch scores
  std::vector<torch::Tensor> features;  // shallow -> deep, kFeatureLayers entries
};

/// PatchGAN-style stack: four stride-2 4x4 convolutions with LeakyReLU,
/// then a 3x3 score convolution. All convolutions are spectrally normalized.
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(const DiscConfig& config);
  DiscOutput forward(const torch::Tensor& img);

 private:
  double slope_;
  torch::nn::ModuleList layers_{nullptr};
  SNConv2d score_{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

/// Bilinear resize of a full-resolution image to the given scale (identity at 1).
torch::Tensor downscale(const torch::Tensor& img, double scale);

/// Three independent discriminators, one per entry of kScales.
class MultiScaleDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit MultiScaleDiscriminatorImpl(const DiscConfig& config = {});

  /// Runs the discriminator for kScales[scale_index] on the full-resolution image.
  DiscOutput forward_scale(const torch::Tensor& img, size_t scale_index);
  std::vector<DiscOutput> forward(const torch::Tensor& img);

  const DiscConfig& config() const { return config_; }

 private:
  DiscConfig config_;
  std::vector<PatchDiscriminator> nets_;
};
TORCH_MODULE(MultiScaleDiscriminator);

}  // namespace psfr::discriminator
