#include "psfr/parsing.hpp"

#include <algorithm>
#include <stdexcept>

#include "psfr/config.hpp"

namespace psfr::parsing {
namespace {

namespace nn = torch::nn;

// 3x3 conv, batch norm, leaky ReLU.
class ConvBnActImpl : public nn::Module {
 public:
  ConvBnActImpl(int64_t in, int64_t out, int64_t stride, double slope) : slope_(slope) {
    conv_ = register_module(
        "conv", nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false)));
    bn_ = register_module("bn", nn::BatchNorm2d(out));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    return torch::leaky_relu(bn_->forward(conv_->forward(x)), slope_);
  }

 private:
  double slope_;
  nn::Conv2d conv_{nullptr};
  nn::BatchNorm2d bn_{nullptr};
};
TORCH_MODULE(ConvBnAct);

ConvBnAct conv_bn_act(int64_t in, int64_t out, int64_t stride, double slope) {
  return ConvBnAct(in, out, stride, slope);
}

class ResBlockImpl : public nn::Module {
 public:
  ResBlockImpl(int64_t channels, double slope) {
    first_ = register_module("first", conv_bn_act(channels, channels, 1, slope));
    second_ = register_module("second", conv_bn_act(channels, channels, 1, slope));
  }
  torch::Tensor forward(const torch::Tensor& x) { return x + second_->forward(first_->forward(x)); }

 private:
  ConvBnAct first_{nullptr}, second_{nullptr};
};
TORCH_MODULE(ResBlock);

}  // namespace

void FpnConfig::validate() const {
  if (num_down != num_up) throw std::invalid_argument("FPN requires num_down == num_up");
  if (num_classes != kNumClasses) throw std::invalid_argument("FPN requires 19 classes");
  if (base_channels < 1 || max_channels < base_channels) {
    throw std::invalid_argument("FPN channel configuration is invalid");
  }
  if (num_down < 0 || num_resblocks < 0) throw std::invalid_argument("FPN block counts must be >= 0");
  if (in_resolution % (int64_t{1} << num_down) != 0) {
    throw std::invalid_argument("FPN resolution must be divisible by 2^num_down");
  }
}

std::map<std::string, std::string> FpnConfig::to_map() const {
  return {{"in_resolution", std::to_string(in_resolution)},
          {"num_classes", std::to_string(num_classes)},
          {"base_channels", std::to_string(base_channels)},
          {"max_channels", std::to_string(max_channels)},
          {"num_down", std::to_string(num_down)},
          {"num_resblocks", std::to_string(num_resblocks)},
          {"num_up", std::to_string(num_up)},
          {"leaky_slope", format_double(leaky_slope)}};
}

FpnConfig FpnConfig::from_map(const std::map<std::string, std::string>& kv) {
  FpnConfig c;
  KeyReader r(kv, "fpn");
  r.get("in_resolution", c.in_resolution);
  r.get("num_classes", c.num_classes);
  r.get("base_channels", c.base_channels);
  r.get("max_channels", c.max_channels);
  r.get("num_down", c.num_down);
  r.get("num_resblocks", c.num_resblocks);
  r.get("num_up", c.num_up);
  r.get("leaky_slope", c.leaky_slope);
  r.finish();
  c.validate();
  return c;
}

FaceParsingNetImpl::FaceParsingNetImpl(FpnConfig config) : config_(std::move(config)) {
  config_.validate();
  const double slope = config_.leaky_slope;
  auto width = [&](int64_t level) {
    return std::min(config_.base_channels << level, config_.max_channels);
  };

  encoder_ = nn::Sequential(conv_bn_act(3, width(0), 1, slope));
  for (int64_t i = 0; i < config_.num_down; ++i) {
    encoder_->push_back(conv_bn_act(width(i), width(i + 1), 2, slope));
  }

  trunk_ = nn::Sequential();
  for (int64_t i = 0; i < config_.num_resblocks; ++i) {
    trunk_->push_back(ResBlock(width(config_.num_down), slope));
  }
  if (config_.num_resblocks == 0) trunk_->push_back(nn::Identity());

  decoder_ = nn::Sequential();
  for (int64_t i = config_.num_up; i > 0; --i) {
    decoder_->push_back(nn::Upsample(
        nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest)));
    decoder_->push_back(conv_bn_act(width(i), width(i - 1), 1, slope));
  }
  if (config_.num_up == 0) decoder_->push_back(nn::Identity());

  parse_head_ = nn::Conv2d(nn::Conv2dOptions(width(0), config_.num_classes, 3).padding(1));
  image_head_ = nn::Conv2d(nn::Conv2dOptions(width(0), 3, 3).padding(1));

  register_module("encoder", encoder_);
  register_module("trunk", trunk_);
  register_module("decoder", decoder_);
  register_module("parse_head", parse_head_);
  register_module("image_head", image_head_);
}

FpnOutput FaceParsingNetImpl::forward(const torch::Tensor& lq) {
  if (lq.dim() != 4 || lq.size(1) != 3) throw std::invalid_argument("FPN expects B x 3 x H x W");
  if (lq.size(2) != config_.in_resolution || lq.size(3) != config_.in_resolution) {
    throw std::invalid_argument("FPN expects " + std::to_string(config_.in_resolution) +
                                "^2 input, got " + std::to_string(lq.size(2)) + "x" +
                                std::to_string(lq.size(3)));
  }
  auto h = decoder_->forward(trunk_->forward(encoder_->forward(lq)));
  return {parse_head_->forward(h), torch::tanh(image_head_->forward(h))};
}

FpnLoss fpn_loss(const torch::Tensor& logits, const torch::Tensor& restored,
                 const torch::Tensor& gt_labels, const torch::Tensor& gt_hq) {
  if (logits.dim() != 4 || logits.size(1) != kNumClasses) {
    throw std::invalid_argument("fpn_loss: logits must be B x 19 x H x W");
  }
  if (gt_labels.dim() != 3 || gt_labels.size(0) != logits.size(0) ||
      gt_labels.size(1) != logits.size(2) || gt_labels.size(2) != logits.size(3)) {
    throw std::invalid_argument("fpn_loss: label map shape does not match logits");
  }
  if (!restored.sizes().equals(gt_hq.sizes())) {
    throw std::invalid_argument("fpn_loss: restored and ground-truth shapes differ");
  }
  check_labels(gt_labels);
  FpnLoss loss;
  loss.parse = torch::nn::functional::cross_entropy(logits, gt_labels.to(torch::kInt64));
  loss.pix = torch::mse_loss(restored, gt_hq);
  loss.total = loss.parse + loss.pix;
  return loss;
}

torch::Tensor argmax_labels(const torch::Tensor& logits) {
  if (logits.dim() != 4) throw std::invalid_argument("argmax_labels expects B x C x H x W");
  // torch::argmax returns the first maximal index, which is the lowest class.
  return logits.argmax(1);
}

double pixel_accuracy(const torch::Tensor& predicted, const torch::Tensor& truth) {
  if (!predicted.sizes().equals(truth.sizes())) throw std::invalid_argument("pixel_accuracy: shape mismatch");
  return predicted.eq(truth).to(torch::kFloat64).mean().item<double>();
}

}  // namespace psfr::parsing
