#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

namespace psfr {

/// Number of semantic classes in a parsing map (label 0 is background).
inline constexpr int kNumClasses = 19;

/// 8-bit RGB image, row-major H x W x 3.
///
/// Backed by a CV_8UC3 cv::Mat in RGB channel order. Copies share pixels the
/// same way cv::Mat does; use clone() for a deep copy.
class Image8 {
 public:
  Image8() = default;
  Image8(int height, int width, uint8_t fill = 0);
  explicit Image8(cv::Mat rgb);

  int height() const { return mat_.rows; }
  int width() const { return mat_.cols; }
  bool empty() const { return mat_.empty(); }

  uint8_t& at(int y, int x, int c) { return mat_.ptr<uint8_t>(y)[3 * x + c]; }
  uint8_t at(int y, int x, int c) const { return mat_.ptr<uint8_t>(y)[3 * x + c]; }

  const cv::Mat& mat() const { return mat_; }
  cv::Mat& mat() { return mat_; }

  Image8 clone() const { return Image8(mat_.clone()); }

  /// Byte-wise equality of pixels and shape.
  bool operator==(const Image8& other) const;

 private:
  cv::Mat mat_;
};

Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& img);

/// Label maps on disk are single-channel 8-bit PNGs whose value is the class index.
torch::Tensor read_label_png(const std::filesystem::path& path);
void write_label_png(const std::filesystem::path& path, const torch::Tensor& labels);

/// Throws std::invalid_argument if any label falls outside [0, kNumClasses).
void check_labels(const torch::Tensor& labels);

/// Image8 -> float tensor 3 x H x W in [-1, 1].
torch::Tensor to_tensor(const Image8& img);
/// Batch of images -> B x 3 x H x W.
torch::Tensor to_tensor(const std::vector<Image8>& imgs);
/// 3 x H x W (or 1 x 3 x H x W) tensor in [-1, 1] -> Image8 with rounding and clamping.
Image8 to_image(const torch::Tensor& t);

/// Resizes an 8-bit image with bicubic interpolation; returns a copy if the size already matches.
Image8 resize_bicubic(const Image8& img, int height, int width);

/// Sorted list of *.png files directly inside dir.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

}  // namespace psfr
