#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include <torch/torch.h>

#include "psfr/config.hpp"

namespace psfr::losses {

struct LossWeights {
  double lambda_ss = 100.0;
  double lambda_rec = 10.0;
  double lambda_adv = 1.0;

  void validate() const;
  KeyValues to_map() const;
  static LossWeights from_map(const KeyValues& kv);
};

/// The three generator objectives before weighting.
template <class T>
struct GeneratorLossParts {
  T style;           // L_ss
  T reconstruction;  // L_rec
  T adversarial;     // L_GAN_G
};

/// lambda_ss * L_ss + lambda_rec * L_rec + lambda_adv * L_GAN_G.
template <class T>
T total_g_loss(const GeneratorLossParts<T>& parts, const LossWeights& w) {
  return parts.style * w.lambda_ss + parts.reconstruction * w.lambda_rec +
         parts.adversarial * w.lambda_adv;
}

/// Perceptual feature extractor used by the style loss.
///
/// Takes B x 3 x H x W images in [-1, 1] and returns feature maps of strictly
/// decreasing spatial resolution. Parameters are frozen.
class FeatureExtractorImpl : public torch::nn::Module {
 public:
  virtual std::vector<torch::Tensor> forward(const torch::Tensor& img) = 0;
};
using FeatureExtractor = std::shared_ptr<FeatureExtractorImpl>;

/// Small fixed random-weight extractor: conv+ReLU, then (avg-pool, conv+ReLU)
/// per further stage, one feature map per stage.
class RandomConvExtractorImpl : public FeatureExtractorImpl {
 public:
  RandomConvExtractorImpl(std::vector<int64_t> stage_channels, uint64_t seed);
  std::vector<torch::Tensor> forward(const torch::Tensor& img) override;

 private:
  std::vector<torch::nn::Conv2d> convs_;
};

/// VGG-19 convolutional trunk up to relu5_1, returning relu3_1, relu4_1 and
/// relu5_1. Parameter names follow the usual `features.<index>.weight`
/// layout so pretrained weights can be imported with load_weights().
class Vgg19ExtractorImpl : public FeatureExtractorImpl {
 public:
  Vgg19ExtractorImpl();
  std::vector<torch::Tensor> forward(const torch::Tensor& img) override;

  /// Reads weights written in the checkpoint format (see checkpoint.hpp).
  void load_weights(const std::filesystem::path& path);

 private:
  torch::nn::Sequential features_{nullptr};
  torch::Tensor mean_, std_;
};

std::shared_ptr<RandomConvExtractorImpl> make_random_extractor(std::vector<int64_t> stage_channels,
                                                               uint64_t seed);
std::shared_ptr<Vgg19ExtractorImpl> make_vgg19_extractor();

inline constexpr double kGramEps = 1e-8;

/// (phi * m)^T (phi * m) / (sum(m) + eps) for phi: C x H x W, mask: H x W.
torch::Tensor masked_gram(const torch::Tensor& phi, const torch::Tensor& mask, double eps = kGramEps);

/// Batched form: phi B x C x H x W, mask B x H x W -> B x C x C.
torch::Tensor masked_gram_batch(const torch::Tensor& phi, const torch::Tensor& mask, double eps = kGramEps);

/// B x H x W labels -> B x 19 x h x w soft masks by area averaging.
torch::Tensor label_masks(const torch::Tensor& labels, int64_t height, int64_t width,
                          const torch::TensorOptions& options);

/// Semantic-aware style loss from precomputed feature maps.
torch::Tensor semantic_style_loss(const std::vector<torch::Tensor>& pred_features,
                                  const std::vector<torch::Tensor>& gt_features,
                                  const torch::Tensor& labels);

/// Semantic-aware style loss; masks come from `labels` at image resolution.
torch::Tensor semantic_style_loss(const torch::Tensor& pred, const torch::Tensor& gt,
                                  const torch::Tensor& labels, FeatureExtractorImpl& extractor);

using ScaleFeatures = std::vector<std::vector<torch::Tensor>>;

/// Pixel MSE plus feature matching over every scale and layer.
torch::Tensor reconstruction_loss(const torch::Tensor& pred, const torch::Tensor& gt,
                                  const ScaleFeatures& pred_features, const ScaleFeatures& gt_features);

/// sum_s -mean(D_s(fake)).
torch::Tensor gan_g_loss(const std::vector<torch::Tensor>& fake_scores);

/// sum_s mean(max(0, 1 - D_s(real))) + mean(max(0, 1 + D_s(fake))).
torch::Tensor gan_d_loss(const std::vector<torch::Tensor>& real_scores,
                         const std::vector<torch::Tensor>& fake_scores);

}  // namespace psfr::losses
