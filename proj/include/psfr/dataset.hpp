#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

#include "psfr/image.hpp"
#include "psfr/pipeline.hpp"

namespace psfr {

/// An aligned HQ face and its parsing map (H x W int64 labels).
struct FaceSample {
  Image8 hq;
  torch::Tensor labels;
};

/// In-memory set of (HQ image, label map) pairs at a fixed resolution.
class FaceDataset {
 public:
  FaceDataset() = default;
  explicit FaceDataset(std::vector<FaceSample> samples);

  /// Pairs `<stem>.png` in hq_dir with `<stem>.png` in label_dir. Images are
  /// resized to `resolution` (bilinear for HQ, nearest for labels) when needed.
  static FaceDataset from_directories(const std::filesystem::path& hq_dir,
                                      const std::filesystem::path& label_dir, int resolution);

  /// Procedural faces; see make_synthetic_face().
  static FaceDataset synthetic(int64_t count, int resolution, uint64_t seed,
                               const std::vector<int64_t>& classes);

  /// Builds the dataset described by `config.data`.
  static FaceDataset from_config(const PipelineConfig& config);

  size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const FaceSample& operator[](size_t i) const { return samples_.at(i); }
  int resolution() const { return samples_.empty() ? 0 : samples_.front().hq.height(); }

 private:
  std::vector<FaceSample> samples_;
};

/// Draws a smooth cartoon face with per-seed geometry, colours and mild
/// texture. Only parts whose label is listed in `classes` are drawn (label 0,
/// the background, is always present).
FaceSample make_synthetic_face(uint64_t seed, int resolution, const std::vector<int64_t>& classes);

}  // namespace psfr
