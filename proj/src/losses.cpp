#include "psfr/losses.hpp"

#include <stdexcept>

#include "psfr/checkpoint.hpp"
#include "psfr/discriminator.hpp"
#include "psfr/image.hpp"

namespace psfr::losses {
namespace {

namespace F = torch::nn::functional;

}  // namespace

void LossWeights::validate() const {
  if (lambda_ss < 0 || lambda_rec < 0 || lambda_adv < 0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

KeyValues LossWeights::to_map() const {
  return {{"lambda_ss", format_double(lambda_ss)},
          {"lambda_rec", format_double(lambda_rec)},
          {"lambda_adv", format_double(lambda_adv)}};
}

LossWeights LossWeights::from_map(const KeyValues& kv) {
  LossWeights w;
  KeyReader r(kv, "loss");
  r.get("lambda_ss", w.lambda_ss);
  r.get("lambda_rec", w.lambda_rec);
  r.get("lambda_adv", w.lambda_adv);
  r.finish();
  w.validate();
  return w;
}

RandomConvExtractorImpl::RandomConvExtractorImpl(std::vector<int64_t> stage_channels, uint64_t seed) {
  if (stage_channels.empty()) throw std::invalid_argument("extractor needs at least one stage");
  auto gen = at::detail::createCPUGenerator(seed);
  int64_t in = 3;
  for (size_t i = 0; i < stage_channels.size(); ++i) {
    auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions(in, stage_channels[i], 3).padding(1));
    torch::NoGradGuard no_grad;
    const double std = std::sqrt(2.0 / static_cast<double>(in * 9));
    conv->weight.normal_(0.0, std, gen);
    conv->bias.normal_(0.0, 0.1, gen);
    convs_.push_back(register_module("conv" + std::to_string(i), conv));
    in = stage_channels[i];
  }
  for (auto& p : parameters()) p.set_requires_grad(false);
}

std::vector<torch::Tensor> RandomConvExtractorImpl::forward(const torch::Tensor& img) {
  std::vector<torch::Tensor> out;
  auto h = img;
  for (size_t i = 0; i < convs_.size(); ++i) {
    if (i > 0) h = F::avg_pool2d(h, F::AvgPool2dFuncOptions(2));
    h = torch::relu(convs_[i]->forward(h));
    out.push_back(h);
  }
  return out;
}

Vgg19ExtractorImpl::Vgg19ExtractorImpl() {
  namespace nn = torch::nn;
  // Standard VGG-19 layout truncated after relu5_1 (index 29).
  const std::vector<int64_t> plan = {64, 64, -1, 128, 128, -1, 256, 256, 256, 256, -1,
                                     512, 512, 512, 512, -1, 512};
  features_ = nn::Sequential();
  int64_t in = 3;
  for (int64_t c : plan) {
    if (c < 0) {
      features_->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2)));
    } else {
      features_->push_back(nn::Conv2d(nn::Conv2dOptions(in, c, 3).padding(1)));
      features_->push_back(nn::ReLU());
      in = c;
    }
  }
  register_module("features", features_);
  mean_ = register_buffer("mean", torch::tensor({0.485, 0.456, 0.406}).view({1, 3, 1, 1}));
  std_ = register_buffer("std", torch::tensor({0.229, 0.224, 0.225}).view({1, 3, 1, 1}));
  for (auto& p : parameters()) p.set_requires_grad(false);
}

std::vector<torch::Tensor> Vgg19ExtractorImpl::forward(const torch::Tensor& img) {
  constexpr size_t kRelu31 = 11, kRelu41 = 20, kRelu51 = 29;
  auto h = ((img + 1.0) * 0.5 - mean_) / std_;
  std::vector<torch::Tensor> out;
  size_t i = 0;
  for (auto& layer : *features_) {
    h = layer.forward(h);
    if (i == kRelu31 || i == kRelu41 || i == kRelu51) out.push_back(h);
    if (i++ == kRelu51) break;
  }
  return out;
}

void Vgg19ExtractorImpl::load_weights(const std::filesystem::path& path) {
  auto ckpt = checkpoint::read(path);
  // Every conv of the truncated network must be present; extra entries are
  // ignored and the normalization buffers keep their built-in values.
  for (const auto& item : named_parameters()) {
    if (!ckpt.find(item.key())) {
      throw CheckpointError(path.string() + ": VGG19 weights lack '" + item.key() + "'");
    }
  }
  checkpoint::load_module(*this, ckpt, "", /*strict=*/false);
}

std::shared_ptr<RandomConvExtractorImpl> make_random_extractor(std::vector<int64_t> stage_channels,
                                                               uint64_t seed) {
  return std::make_shared<RandomConvExtractorImpl>(std::move(stage_channels), seed);
}

std::shared_ptr<Vgg19ExtractorImpl> make_vgg19_extractor() { return std::make_shared<Vgg19ExtractorImpl>(); }

torch::Tensor masked_gram(const torch::Tensor& phi, const torch::Tensor& mask, double eps) {
  if (phi.dim() != 3 || mask.dim() != 2 || phi.size(1) != mask.size(0) || phi.size(2) != mask.size(1)) {
    throw std::invalid_argument("masked_gram expects C x H x W features and an H x W mask");
  }
  return masked_gram_batch(phi.unsqueeze(0), mask.unsqueeze(0), eps)[0];
}

torch::Tensor masked_gram_batch(const torch::Tensor& phi, const torch::Tensor& mask, double eps) {
  const auto b = phi.size(0), c = phi.size(1);
  auto masked = (phi * mask.unsqueeze(1)).reshape({b, c, -1});
  auto denom = mask.sum({1, 2}).view({b, 1, 1}) + eps;
  return torch::bmm(masked, masked.transpose(1, 2)) / denom;
}

torch::Tensor label_masks(const torch::Tensor& labels, int64_t height, int64_t width,
                          const torch::TensorOptions& options) {
  check_labels(labels);
  auto onehot = torch::one_hot(labels.to(torch::kInt64), kNumClasses).permute({0, 3, 1, 2}).to(options);
  if (onehot.size(2) == height && onehot.size(3) == width) return onehot;
  return F::adaptive_avg_pool2d(onehot, F::AdaptiveAvgPool2dFuncOptions({height, width}));
}

torch::Tensor semantic_style_loss(const std::vector<torch::Tensor>& pred_features,
                                  const std::vector<torch::Tensor>& gt_features,
                                  const torch::Tensor& labels) {
  if (pred_features.size() != gt_features.size() || pred_features.empty()) {
    throw std::invalid_argument("style loss needs matching, non-empty feature lists");
  }
  torch::Tensor total = torch::zeros({}, pred_features.front().options());
  for (size_t layer = 0; layer < pred_features.size(); ++layer) {
    const auto& fp = pred_features[layer];
    const auto& fg = gt_features[layer];
    auto masks = label_masks(labels, fp.size(2), fp.size(3), fp.options());
    auto present = masks.sum({0, 2, 3}).gt(0);
    for (int64_t j = 0; j < kNumClasses; ++j) {
      // An absent label has an all-zero mask, so both Gram matrices vanish.
      if (!present[j].item<bool>()) continue;
      auto m = masks.select(1, j);
      total = total + torch::mse_loss(masked_gram_batch(fp, m), masked_gram_batch(fg, m));
    }
  }
  return total;
}

torch::Tensor semantic_style_loss(const torch::Tensor& pred, const torch::Tensor& gt,
                                  const torch::Tensor& labels, FeatureExtractorImpl& extractor) {
  if (!pred.sizes().equals(gt.sizes())) throw std::invalid_argument("style loss: image shapes differ");
  if (labels.dim() != 3 || labels.size(0) != pred.size(0) || labels.size(1) != pred.size(2) ||
      labels.size(2) != pred.size(3)) {
    throw std::invalid_argument("style loss: label map must be B x H x W matching the images");
  }
  auto fp = extractor.forward(pred);
  std::vector<torch::Tensor> fg;
  if (gt.requires_grad()) {
    fg = extractor.forward(gt);
  } else {
    torch::NoGradGuard no_grad;
    fg = extractor.forward(gt);
  }
  return semantic_style_loss(fp, fg, labels);
}

torch::Tensor reconstruction_loss(const torch::Tensor& pred, const torch::Tensor& gt,
                                  const ScaleFeatures& pred_features, const ScaleFeatures& gt_features) {
  if (pred_features.size() != gt_features.size()) {
    throw std::invalid_argument("reconstruction_loss: scale counts differ");
  }
  auto loss = torch::mse_loss(pred, gt);
  for (size_t s = 0; s < pred_features.size(); ++s) {
    if (pred_features[s].size() != discriminator::kFeatureLayers ||
        gt_features[s].size() != discriminator::kFeatureLayers) {
      throw std::invalid_argument("reconstruction_loss: every scale needs exactly 4 feature layers");
    }
    for (size_t k = 0; k < pred_features[s].size(); ++k) {
      loss = loss + torch::mse_loss(pred_features[s][k], gt_features[s][k]);
    }
  }
  return loss;
}

torch::Tensor gan_g_loss(const std::vector<torch::Tensor>& fake_scores) {
  if (fake_scores.empty()) throw std::invalid_argument("gan_g_loss: no scores");
  auto loss = torch::zeros({}, fake_scores.front().options());
  for (const auto& s : fake_scores) loss = loss - s.mean();
  return loss;
}

torch::Tensor gan_d_loss(const std::vector<torch::Tensor>& real_scores,
                         const std::vector<torch::Tensor>& fake_scores) {
  if (real_scores.size() != fake_scores.size() || real_scores.empty()) {
    throw std::invalid_argument("gan_d_loss: score lists must be non-empty and equally long");
  }
  auto loss = torch::zeros({}, real_scores.front().options());
  for (size_t s = 0; s < real_scores.size(); ++s) {
    loss = loss + torch::relu(1.0 - real_scores[s]).mean() + torch::relu(1.0 + fake_scores[s]).mean();
  }
  return loss;
}

}  // namespace psfr::losses
