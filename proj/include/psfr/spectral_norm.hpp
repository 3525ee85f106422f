#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace psfr {

struct SpectralEstimate {
  torch::Tensor u;  // left singular vector estimate, size = rows
  torch::Tensor v;  // right singular vector estimate, size = cols
  torch::Tensor sigma;
};

/// Runs `iterations` steps of power iteration on a 2-D matrix starting from `u`.
/// The returned sigma = u^T W v keeps the autograd graph through `weight`;
/// u and v are detached.
SpectralEstimate power_iteration(const torch::Tensor& weight, torch::Tensor u, int iterations);

/// Divides `weight` (any rank; viewed as out x rest) by its estimated top singular value.
torch::Tensor spectral_normalize(const torch::Tensor& weight, torch::Tensor& u, int iterations);

/// Convenience overload starting power iteration from a fixed all-ones vector.
torch::Tensor spectral_normalize(const torch::Tensor& weight, int iterations);

struct SNConv2dOptions {
  SNConv2dOptions(int64_t in, int64_t out, int64_t kernel) : in_channels_(in), out_channels_(out), kernel_size_(kernel) {}
  TORCH_ARG(int64_t, in_channels);
  TORCH_ARG(int64_t, out_channels);
  TORCH_ARG(int64_t, kernel_size);
  TORCH_ARG(int64_t, stride) = 1;
  TORCH_ARG(int64_t, padding) = 0;
  TORCH_ARG(bool, bias) = true;
  /// Power iterations per training-mode forward.
  TORCH_ARG(int, power_iterations) = 1;
};

/// 2-D convolution whose kernel is spectrally normalized on every forward.
///
/// In training mode each forward advances the persistent `u` buffer by
/// `power_iterations` steps; in eval mode `u` is frozen so the layer is a
/// deterministic function of its parameters.
class SNConv2dImpl : public torch::nn::Module {
 public:
  explicit SNConv2dImpl(const SNConv2dOptions& options);

  torch::Tensor forward(const torch::Tensor& x);

  /// The kernel actually applied by forward() given the current u (no update).
  torch::Tensor normalized_weight();

  void reset_parameters();

  SNConv2dOptions options;
  torch::Tensor weight;
  torch::Tensor bias;
  torch::Tensor u;
};
TORCH_MODULE(SNConv2d);

}  // namespace psfr
