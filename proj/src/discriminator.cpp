#include "psfr/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace psfr::discriminator {
namespace {

namespace F = torch::nn::functional;

}  // namespace

void DiscConfig::validate() const {
  if (base_channels < 1 || max_channels < base_channels) {
    throw std::invalid_argument("discriminator channel configuration is invalid");
  }
}

KeyValues DiscConfig::to_map() const {
  return {{"base_channels", std::to_string(base_channels)},
          {"max_channels", std::to_string(max_channels)},
          {"leaky_slope", format_double(leaky_slope)}};
}

DiscConfig DiscConfig::from_map(const KeyValues& kv) {
  DiscConfig c;
  KeyReader r(kv, "discriminator");
  r.get("base_channels", c.base_channels);
  r.get("max_channels", c.max_channels);
  r.get("leaky_slope", c.leaky_slope);
  r.finish();
  c.validate();
  return c;
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const DiscConfig& config) : slope_(config.leaky_slope) {
  config.validate();
  layers_ = register_module("layers", torch::nn::ModuleList());
  int64_t in = 3;
  for (int k = 0; k < kFeatureLayers; ++k) {
    const int64_t out = std::min(config.base_channels << k, config.max_channels);
    layers_->push_back(SNConv2d(SNConv2dOptions(in, out, 4).stride(2).padding(1)));
    in = out;
  }
  score_ = register_module("score", SNConv2d(SNConv2dOptions(in, 1, 3).padding(1)));
}

DiscOutput PatchDiscriminatorImpl::forward(const torch::Tensor& img) {
  DiscOutput out;
  auto h = img;
  for (const auto& layer : *layers_) {
    h = F::leaky_relu(layer->as<SNConv2d>()->forward(h), F::LeakyReLUFuncOptions().negative_slope(slope_));
    out.features.push_back(h);
  }
  out.score = score_->forward(h);
  return out;
}

torch::Tensor downscale(const torch::Tensor& img, double scale) {
  if (scale == 1.0) return img;
  const auto h = static_cast<int64_t>(std::lround(img.size(2) * scale));
  const auto w = static_cast<int64_t>(std::lround(img.size(3) * scale));
  return F::interpolate(img, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{h, w})
                                 .mode(torch::kBilinear)
                                 .align_corners(false)
                                 .antialias(true));
}

MultiScaleDiscriminatorImpl::MultiScaleDiscriminatorImpl(const DiscConfig& config) : config_(config) {
  for (size_t s = 0; s < kScales.size(); ++s) {
    nets_.push_back(register_module("scale" + std::to_string(s), PatchDiscriminator(config_)));
  }
}

DiscOutput MultiScaleDiscriminatorImpl::forward_scale(const torch::Tensor& img, size_t scale_index) {
  if (scale_index >= nets_.size()) throw std::out_of_range("discriminator scale index");
  return nets_[scale_index]->forward(downscale(img, kScales[scale_index]));
}

std::vector<DiscOutput> MultiScaleDiscriminatorImpl::forward(const torch::Tensor& img) {
  std::vector<DiscOutput> out;
  for (size_t s = 0; s < nets_.size(); ++s) out.push_back(forward_scale(img, s));
  return out;
}

}  // namespace psfr::discriminator
