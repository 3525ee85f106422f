#include "psfr/generator.hpp"

#include <stdexcept>

#include "psfr/image.hpp"

namespace psfr::generator {
namespace {

namespace F = torch::nn::functional;

torch::Tensor lrelu(const torch::Tensor& x, double slope) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(slope));
}

}  // namespace

void GenConfig::validate() const {
  if (base_resolution < 1) throw std::invalid_argument("base_resolution must be positive");
  if (num_blocks < 1) throw std::invalid_argument("num_blocks must be positive");
  if (static_cast<int64_t>(channel_schedule.size()) != num_blocks) {
    throw std::invalid_argument("channel_schedule must have one entry per block");
  }
  for (size_t i = 0; i < channel_schedule.size(); ++i) {
    if (channel_schedule[i] < 1) throw std::invalid_argument("channel widths must be positive");
    if (i > 0 && channel_schedule[i] > channel_schedule[i - 1]) {
      throw std::invalid_argument("channel_schedule must be non-increasing");
    }
  }
  if (const_channels < 1 || style_channels < 1) throw std::invalid_argument("channel counts must be positive");
}

KeyValues GenConfig::to_map() const {
  return {{"base_resolution", std::to_string(base_resolution)},
          {"num_blocks", std::to_string(num_blocks)},
          {"channel_schedule", join_ints(channel_schedule)},
          {"const_channels", std::to_string(const_channels)},
          {"style_channels", std::to_string(style_channels)},
          {"leaky_slope", format_double(leaky_slope)}};
}

GenConfig GenConfig::from_map(const KeyValues& kv) {
  GenConfig c;
  KeyReader r(kv, "generator");
  r.get("base_resolution", c.base_resolution);
  r.get("num_blocks", c.num_blocks);
  r.get("channel_schedule", c.channel_schedule);
  r.get("const_channels", c.const_channels);
  r.get("style_channels", c.style_channels);
  r.get("leaky_slope", c.leaky_slope);
  r.finish();
  c.validate();
  return c;
}

InputPyramid InputPyramid::with_zeroed_levels(const std::set<int64_t>& levels) const {
  InputPyramid out = *this;
  for (int64_t level : levels) {
    if (level < 1 || level > static_cast<int64_t>(size())) {
      throw std::invalid_argument("pyramid level " + std::to_string(level) + " out of range");
    }
    out.lq[level - 1] = torch::zeros_like(lq[level - 1]);
    out.parse[level - 1] = torch::zeros_like(parse[level - 1]);
  }
  return out;
}

torch::Tensor one_hot(const torch::Tensor& labels, const torch::TensorOptions& options) {
  check_labels(labels);
  return torch::one_hot(labels.to(torch::kInt64), kNumClasses).permute({0, 3, 1, 2}).to(options);
}

torch::Tensor resize_bicubic(const torch::Tensor& x, int64_t side) {
  if (x.size(2) == side && x.size(3) == side) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{side, side})
                               .mode(torch::kBicubic)
                               .align_corners(false)
                               .antialias(true));
}

InputPyramid build_input_pyramid(const torch::Tensor& lq, const torch::Tensor& labels,
                                 const GenConfig& config) {
  if (lq.dim() != 4 || lq.size(1) != 3) throw std::invalid_argument("LQ must be B x 3 x H x W");
  if (labels.dim() != 3 || labels.size(0) != lq.size(0) || labels.size(1) != lq.size(2) ||
      labels.size(2) != lq.size(3)) {
    throw std::invalid_argument("label map must be B x H x W matching the LQ image");
  }
  const int64_t full = config.output_resolution();
  if (lq.size(2) != full || lq.size(3) != full) {
    throw std::invalid_argument("LQ resolution must equal the generator output resolution " +
                                std::to_string(full));
  }
  auto onehot = one_hot(labels, lq.options());
  InputPyramid p;
  for (int64_t i = 1; i <= config.num_blocks; ++i) {
    const int64_t side = config.level_resolution(i);
    p.lq.push_back(resize_bicubic(lq, side));
    p.parse.push_back(resize_bicubic(onehot, side));
  }
  return p;
}

StyleNetImpl::StyleNetImpl(int64_t feature_channels, int64_t hidden_channels, double leaky_slope)
    : slope_(leaky_slope) {
  const int64_t in = 3 + kNumClasses;
  trunk1 = register_module("trunk1", SNConv2d(SNConv2dOptions(in, hidden_channels, 3).padding(1)));
  trunk2 = register_module("trunk2", SNConv2d(SNConv2dOptions(hidden_channels, hidden_channels, 3).padding(1)));
  scale_head = register_module("scale_head",
                               SNConv2d(SNConv2dOptions(hidden_channels, feature_channels, 3).padding(1)));
  shift_head = register_module("shift_head",
                               SNConv2d(SNConv2dOptions(hidden_channels, feature_channels, 3).padding(1)));
  torch::NoGradGuard no_grad;
  trunk1->bias.zero_();
  trunk2->bias.zero_();
  scale_head->bias.fill_(1.0);
  shift_head->bias.zero_();
}

StyleParams StyleNetImpl::forward(const torch::Tensor& lq, const torch::Tensor& parse) {
  auto h = lrelu(trunk1->forward(torch::cat({lq, parse}, 1)), slope_);
  h = lrelu(trunk2->forward(h), slope_);
  return {scale_head->forward(h), shift_head->forward(h)};
}

torch::Tensor style_transform(const torch::Tensor& features, const StyleParams& style, double eps) {
  if (!features.sizes().equals(style.scale.sizes()) || !features.sizes().equals(style.shift.sizes())) {
    throw std::invalid_argument("style parameters must match the feature shape");
  }
  auto mean = features.mean({2, 3}, /*keepdim=*/true);
  auto var = (features - mean).pow(2).mean({2, 3}, /*keepdim=*/true);
  auto normalized = (features - mean) / torch::sqrt(var + eps);
  return style.scale * normalized + style.shift;
}

ResidualBlockImpl::ResidualBlockImpl(int64_t in_channels, int64_t out_channels, bool upsample,
                                     double leaky_slope)
    : upsample_(upsample), slope_(leaky_slope) {
  conv1_ = register_module("conv1", SNConv2d(SNConv2dOptions(in_channels, out_channels, 3).padding(1)));
  conv2_ = register_module("conv2", SNConv2d(SNConv2dOptions(out_channels, out_channels, 3).padding(1)));
  if (in_channels != out_channels) {
    skip_ = register_module("skip", SNConv2d(SNConv2dOptions(in_channels, out_channels, 1).bias(false)));
  }
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto in = upsample_ ? F::interpolate(x, F::InterpolateFuncOptions()
                                              .scale_factor(std::vector<double>{2.0, 2.0})
                                              .mode(torch::kNearest))
                      : x;
  auto h = conv1_->forward(lrelu(in, slope_));
  h = conv2_->forward(lrelu(h, slope_));
  auto skip = skip_ ? skip_->forward(in) : in;
  return skip + h;
}

GeneratorImpl::GeneratorImpl(GenConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& ch = config_.channel_schedule;
  constant = register_parameter(
      "constant", torch::randn({1, config_.const_channels, config_.base_resolution, config_.base_resolution}));
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  styles_ = register_module("styles", torch::nn::ModuleList());
  for (int64_t i = 0; i < config_.num_blocks; ++i) {
    const int64_t in = i == 0 ? config_.const_channels : ch[i - 1];
    blocks_->push_back(ResidualBlock(in, ch[i], /*upsample=*/i > 0, config_.leaky_slope));
    styles_->push_back(StyleNet(ch[i], config_.style_channels, config_.leaky_slope));
  }
  to_rgb_ = register_module("to_rgb", SNConv2d(SNConv2dOptions(ch.back(), 3, 3).padding(1)));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& lq, const torch::Tensor& labels) {
  return forward_pyramid(build_input_pyramid(lq, labels, config_));
}

torch::Tensor GeneratorImpl::forward_pyramid(const InputPyramid& pyramid, std::vector<torch::Tensor>* trace) {
  if (static_cast<int64_t>(pyramid.size()) != config_.num_blocks) {
    throw std::invalid_argument("pyramid depth does not match the generator");
  }
  const int64_t batch = pyramid.lq.front().size(0);
  auto f = constant.expand({batch, -1, -1, -1});
  for (int64_t i = 0; i < config_.num_blocks; ++i) {
    f = blocks_[i]->as<ResidualBlock>()->forward(f);
    auto style = styles_[i]->as<StyleNet>()->forward(pyramid.lq[i], pyramid.parse[i]);
    f = style_transform(f, style);
    if (trace) trace->push_back(f);
  }
  return torch::tanh(to_rgb_->forward(f));
}

}  // namespace psfr::generator
