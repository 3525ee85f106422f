#include "psfr/image.hpp"

#include <algorithm>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "psfr/errors.hpp"

namespace psfr {

Image8::Image8(int height, int width, uint8_t fill)
    : mat_(height, width, CV_8UC3, cv::Scalar::all(fill)) {}

Image8::Image8(cv::Mat rgb) : mat_(std::move(rgb)) {
  if (!mat_.empty() && mat_.type() != CV_8UC3) {
    throw std::invalid_argument("Image8 requires an 8-bit 3-channel matrix");
  }
}

bool Image8::operator==(const Image8& other) const {
  if (height() != other.height() || width() != other.width()) return false;
  for (int y = 0; y < height(); ++y) {
    const uint8_t* a = mat_.ptr<uint8_t>(y);
    const uint8_t* b = other.mat_.ptr<uint8_t>(y);
    if (!std::equal(a, a + 3 * width(), b)) return false;
  }
  return true;
}

Image8 read_png(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError(path, "cannot decode image");
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return Image8(rgb);
}

void write_png(const std::filesystem::path& path, const Image8& img) {
  cv::Mat bgr;
  cv::cvtColor(img.mat(), bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw IoError(path, "cannot write image");
}

torch::Tensor read_label_png(const std::filesystem::path& path) {
  cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw IoError(path, "cannot decode label map");
  auto labels = torch::from_blob(gray.data, {gray.rows, gray.cols}, torch::kUInt8)
                    .to(torch::kInt64);
  try {
    check_labels(labels);
  } catch (const std::invalid_argument& e) {
    throw IoError(path, e.what());
  }
  return labels;
}

void write_label_png(const std::filesystem::path& path, const torch::Tensor& labels) {
  check_labels(labels);
  auto flat = labels.squeeze().to(torch::kUInt8).contiguous();
  if (flat.dim() != 2) throw std::invalid_argument("label map must be H x W");
  cv::Mat gray(static_cast<int>(flat.size(0)), static_cast<int>(flat.size(1)), CV_8UC1,
               flat.data_ptr<uint8_t>());
  if (!cv::imwrite(path.string(), gray)) throw IoError(path, "cannot write label map");
}

void check_labels(const torch::Tensor& labels) {
  if (labels.numel() == 0) return;
  auto lo = labels.min().item<int64_t>();
  auto hi = labels.max().item<int64_t>();
  if (lo < 0 || hi >= kNumClasses) {
    throw std::invalid_argument("label out of range [0, 18]: found " + std::to_string(lo) +
                                ".." + std::to_string(hi));
  }
}

torch::Tensor to_tensor(const Image8& img) {
  cv::Mat m = img.mat().isContinuous() ? img.mat() : img.mat().clone();
  auto t = torch::from_blob(m.data, {img.height(), img.width(), 3}, torch::kUInt8)
               .to(torch::kFloat32)
               .permute({2, 0, 1})
               .contiguous();
  return t / 127.5 - 1.0;
}

torch::Tensor to_tensor(const std::vector<Image8>& imgs) {
  std::vector<torch::Tensor> ts;
  ts.reserve(imgs.size());
  for (const auto& im : imgs) ts.push_back(to_tensor(im));
  return torch::stack(ts);
}

Image8 to_image(const torch::Tensor& t) {
  auto x = t.detach().to(torch::kCPU);
  if (x.dim() == 4) {
    if (x.size(0) != 1) throw std::invalid_argument("to_image expects a single image");
    x = x[0];
  }
  if (x.dim() != 3 || x.size(0) != 3) throw std::invalid_argument("to_image expects 3 x H x W");
  auto bytes = ((x.to(torch::kFloat64) + 1.0) * 127.5)
                   .round()
                   .clamp(0, 255)
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();
  cv::Mat m(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC3,
            bytes.data_ptr<uint8_t>());
  return Image8(m.clone());
}

Image8 resize_bicubic(const Image8& img, int height, int width) {
  if (img.height() == height && img.width() == width) return img.clone();
  cv::Mat out;
  cv::resize(img.mat(), out, cv::Size(width, height), 0, 0, cv::INTER_CUBIC);
  return Image8(out);
}

std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError(dir, "not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace psfr
