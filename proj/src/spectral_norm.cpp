#include "psfr/spectral_norm.hpp"

#include <cmath>
#include <stdexcept>

namespace psfr {
namespace {

constexpr double kNormEps = 1e-12;

torch::Tensor unit(const torch::Tensor& x) { return x / (x.norm() + kNormEps); }

}  // namespace

SpectralEstimate power_iteration(const torch::Tensor& weight, torch::Tensor u, int iterations) {
  if (weight.dim() != 2) throw std::invalid_argument("power_iteration expects a matrix");
  if (u.dim() != 1 || u.size(0) != weight.size(0)) {
    throw std::invalid_argument("power_iteration: u must have one entry per row");
  }
  torch::Tensor v;
  {
    torch::NoGradGuard no_grad;
    auto w = weight.detach();
    u = unit(u.to(w.dtype()));
    v = unit(torch::mv(w.t(), u));
    for (int i = 0; i < iterations; ++i) {
      u = unit(torch::mv(w, v));
      v = unit(torch::mv(w.t(), u));
    }
  }
  auto sigma = torch::dot(u, torch::mv(weight, v));
  return {u, v, sigma};
}

torch::Tensor spectral_normalize(const torch::Tensor& weight, torch::Tensor& u, int iterations) {
  auto mat = weight.reshape({weight.size(0), -1});
  auto est = power_iteration(mat, u, iterations);
  u = est.u;
  return weight / est.sigma;
}

torch::Tensor spectral_normalize(const torch::Tensor& weight, int iterations) {
  auto u = torch::ones({weight.size(0)}, weight.options().requires_grad(false));
  return spectral_normalize(weight, u, iterations);
}

SNConv2dImpl::SNConv2dImpl(const SNConv2dOptions& opts) : options(opts) {
  weight = register_parameter(
      "weight", torch::empty({options.out_channels(), options.in_channels(), options.kernel_size(),
                              options.kernel_size()}));
  if (options.bias()) bias = register_parameter("bias", torch::empty({options.out_channels()}));
  u = register_buffer("u", torch::empty({options.out_channels()}));
  reset_parameters();
}

void SNConv2dImpl::reset_parameters() {
  torch::NoGradGuard no_grad;
  torch::nn::init::kaiming_uniform_(weight, std::sqrt(5.0));
  if (bias.defined()) {
    const double fan_in = static_cast<double>(weight.numel() / weight.size(0));
    const double bound = 1.0 / std::sqrt(fan_in);
    bias.uniform_(-bound, bound);
  }
  u.normal_();
  u.div_(u.norm() + kNormEps);
}

torch::Tensor SNConv2dImpl::normalized_weight() {
  auto mat = weight.reshape({weight.size(0), -1});
  auto est = power_iteration(mat, u, 0);
  return weight / est.sigma;
}

torch::Tensor SNConv2dImpl::forward(const torch::Tensor& x) {
  auto mat = weight.reshape({weight.size(0), -1});
  auto est = power_iteration(mat, u, is_training() ? options.power_iterations() : 0);
  if (is_training()) {
    torch::NoGradGuard no_grad;
    u.copy_(est.u);
  }
  auto w = weight / est.sigma;
  return torch::conv2d(x, w, bias, options.stride(), options.padding());
}

}  // namespace psfr
