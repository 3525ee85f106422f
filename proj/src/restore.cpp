#include "psfr/restore.hpp"

#include "psfr/train.hpp"

namespace psfr {

Restorer::Restorer(const checkpoint::Checkpoint& fpn, const checkpoint::Checkpoint& gen)
    : fpn_(load_fpn(fpn)), gen_(load_generator(gen)) {
  if (fpn_->config().in_resolution != gen_->config().output_resolution()) {
    throw CheckpointError("FPN resolution " + std::to_string(fpn_->config().in_resolution) +
                          " does not match generator resolution " +
                          std::to_string(gen_->config().output_resolution()));
  }
}

RestoreResult Restorer::restore(const Image8& lq, const std::set<int64_t>& zero_levels) {
  torch::NoGradGuard no_grad;
  const int res = resolution();
  auto input = to_tensor(resize_bicubic(lq, res, res)).unsqueeze(0);
  auto labels = parsing::argmax_labels(fpn_->forward(input).logits);
  auto pyramid = generator::build_input_pyramid(input, labels, gen_->config()).with_zeroed_levels(zero_levels);
  auto out = gen_->forward_pyramid(pyramid);
  return {to_image(out[0]), labels[0], std::move(pyramid)};
}

}  // namespace psfr
