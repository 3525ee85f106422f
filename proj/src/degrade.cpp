#include "psfr/degrade.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace psfr::degrade {
namespace {

int cv_interp(Interp interp) {
  switch (interp) {
    case Interp::kNearest: return cv::INTER_NEAREST;
    case Interp::kBilinear: return cv::INTER_LINEAR;
    case Interp::kBicubic: return cv::INTER_CUBIC;
    case Interp::kArea: return cv::INTER_AREA;
  }
  throw std::invalid_argument("unknown interpolation");
}

int uniform_odd(std::mt19937_64& rng, int lo, int hi) {
  std::uniform_int_distribution<int> pick(0, (hi - lo) / 2);
  return lo + 2 * pick(rng);
}

void require_rgb(const Image8& img) {
  if (img.empty()) throw std::invalid_argument("empty image");
}

}  // namespace

void DegradationParams::validate() const {
  switch (blur_kind) {
    case BlurKind::kNone:
      break;
    case BlurKind::kGaussian:
    case BlurKind::kAverage:
    case BlurKind::kMedian:
      if (blur_size < 3 || blur_size > 15) throw std::invalid_argument("blur_size must lie in [3, 15]");
      if (blur_kind != BlurKind::kAverage && blur_size % 2 == 0) {
        throw std::invalid_argument("gaussian/median blur_size must be odd");
      }
      break;
    case BlurKind::kMotion:
      if (blur_size < 5 || blur_size > 25) throw std::invalid_argument("motion blur_size must lie in [5, 25]");
      break;
  }
  if (!(scale == 1.0 || (scale >= kMinScale && scale <= kMaxScale))) {
    throw std::invalid_argument("scale must lie in [32/512, 256/512] (or equal 1)");
  }
  if (!(noise_sigma >= 0.0 && noise_sigma <= kMaxNoiseSigma)) {
    throw std::invalid_argument("noise_sigma must lie in [0, 25.5]");
  }
  if (jpeg_compression &&
      (*jpeg_compression < kMinJpegCompression || *jpeg_compression > kMaxJpegCompression)) {
    throw std::invalid_argument("jpeg_compression must lie in [10, 65]");
  }
}

DegradationParams identity_params() { return DegradationParams{}; }

DegradationParams sample_params(uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  DegradationParams p;

  if (unit(rng) < 0.5) {
    static constexpr std::array kinds = {BlurKind::kGaussian, BlurKind::kAverage,
                                         BlurKind::kMedian, BlurKind::kMotion};
    p.blur_kind = kinds[std::uniform_int_distribution<int>(0, 3)(rng)];
    if (p.blur_kind == BlurKind::kMotion) {
      p.blur_size = uniform_odd(rng, 5, 25);
      p.motion_angle_deg = std::uniform_real_distribution<double>(0.0, 180.0)(rng);
    } else {
      p.blur_size = uniform_odd(rng, 3, 15);
    }
  }

  p.scale = std::uniform_real_distribution<double>(kMinScale, kMaxScale)(rng);
  p.downsample_interp = static_cast<Interp>(std::uniform_int_distribution<int>(0, 3)(rng));

  if (unit(rng) < 0.2) {
    p.noise_sigma = std::uniform_real_distribution<double>(0.0, kMaxNoiseSigma)(rng);
    p.noise_per_channel = unit(rng) < 0.5;
  }
  p.noise_seed = rng();

  if (unit(rng) < 0.7) {
    p.jpeg_compression =
        std::uniform_int_distribution<int>(kMinJpegCompression, kMaxJpegCompression)(rng);
  }
  return p;
}

int encoder_quality(int compression_level) { return std::clamp(100 - compression_level, 1, 100); }

cv::Mat motion_kernel(int size, double angle_deg) {
  if (size < 1) throw std::invalid_argument("motion kernel size must be positive");
  cv::Mat k = cv::Mat::zeros(size, size, CV_32F);
  const double c = (size - 1) / 2.0;
  const double rad = angle_deg * std::numbers::pi / 180.0;
  const double dx = std::cos(rad), dy = -std::sin(rad);
  // Sample the segment densely and mark every cell it passes through once.
  const int samples = 8 * size;
  for (int s = 0; s <= samples; ++s) {
    const double t = -c + 2.0 * c * s / samples;
    const int x = static_cast<int>(std::lround(c + t * dx));
    const int y = static_cast<int>(std::lround(c + t * dy));
    if (x >= 0 && x < size && y >= 0 && y < size) k.at<float>(y, x) = 1.0F;
  }
  return k / cv::sum(k)[0];
}

Image8 blur(const Image8& img, BlurKind kind, int size, double motion_angle_deg) {
  require_rgb(img);
  cv::Mat out;
  switch (kind) {
    case BlurKind::kNone:
      return img.clone();
    case BlurKind::kGaussian:
      if (size < 1 || size % 2 == 0) throw std::invalid_argument("gaussian kernel size must be odd");
      cv::GaussianBlur(img.mat(), out, cv::Size(size, size), 0.0, 0.0, cv::BORDER_REFLECT_101);
      break;
    case BlurKind::kAverage:
      if (size < 1) throw std::invalid_argument("average kernel size must be positive");
      cv::blur(img.mat(), out, cv::Size(size, size), cv::Point(-1, -1), cv::BORDER_REFLECT_101);
      break;
    case BlurKind::kMedian:
      if (size < 3 || size % 2 == 0) throw std::invalid_argument("median kernel size must be odd and >= 3");
      cv::medianBlur(img.mat(), out, size);
      break;
    case BlurKind::kMotion:
      cv::filter2D(img.mat(), out, -1, motion_kernel(size, motion_angle_deg), cv::Point(-1, -1), 0.0,
                   cv::BORDER_REFLECT_101);
      break;
  }
  return Image8(out);
}

Image8 resize_to(const Image8& img, int side, Interp interp) {
  require_rgb(img);
  if (side < 1) throw std::invalid_argument("target side must be positive");
  if (img.height() == side && img.width() == side) return img.clone();
  cv::Mat out;
  cv::resize(img.mat(), out, cv::Size(side, side), 0, 0, cv_interp(interp));
  return Image8(out);
}

Image8 rescale(const Image8& img, double factor, Interp interp) {
  require_rgb(img);
  if (!(factor > 0.0)) throw std::invalid_argument("rescale factor must be positive");
  const int h = std::max(1, static_cast<int>(std::lround(img.height() * factor)));
  const int w = std::max(1, static_cast<int>(std::lround(img.width() * factor)));
  if (h == img.height() && w == img.width()) return img.clone();
  cv::Mat out;
  cv::resize(img.mat(), out, cv::Size(w, h), 0, 0, cv_interp(interp));
  return Image8(out);
}

Image8 add_awgn(const Image8& img, double sigma, bool per_channel, std::mt19937_64& rng) {
  require_rgb(img);
  if (sigma < 0.0) throw std::invalid_argument("noise sigma must be non-negative");
  if (sigma == 0.0) return img.clone();
  std::normal_distribution<double> noise(0.0, sigma);
  Image8 out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double shared = per_channel ? 0.0 : noise(rng);
      for (int c = 0; c < 3; ++c) {
        const double n = per_channel ? noise(rng) : shared;
        out.at(y, x, c) = static_cast<uint8_t>(std::clamp(std::round(img.at(y, x, c) + n), 0.0, 255.0));
      }
    }
  }
  return out;
}

Image8 jpeg_roundtrip(const Image8& img, int quality) {
  require_rgb(img);
  if (quality < 1 || quality > 100) throw std::invalid_argument("JPEG quality must lie in [1, 100]");
  cv::Mat bgr;
  cv::cvtColor(img.mat(), bgr, cv::COLOR_RGB2BGR);
  std::vector<uint8_t> buf;
  if (!cv::imencode(".jpg", bgr, buf, {cv::IMWRITE_JPEG_QUALITY, quality})) {
    throw std::runtime_error("JPEG encoding failed");
  }
  cv::Mat decoded = cv::imdecode(buf, cv::IMREAD_COLOR);
  cv::Mat rgb;
  cv::cvtColor(decoded, rgb, cv::COLOR_BGR2RGB);
  return Image8(rgb);
}

Image8 degrade(const Image8& hq, const DegradationParams& params, int resolution) {
  if (hq.height() != resolution || hq.width() != resolution) {
    throw std::invalid_argument("degrade expects a " + std::to_string(resolution) + "x" +
                                std::to_string(resolution) + " input, got " +
                                std::to_string(hq.height()) + "x" + std::to_string(hq.width()));
  }
  params.validate();
  Image8 x = blur(hq, params.blur_kind, params.blur_size, params.motion_angle_deg);
  x = rescale(x, params.scale, params.downsample_interp);
  std::mt19937_64 rng(params.noise_seed);
  x = add_awgn(x, params.noise_sigma, params.noise_per_channel, rng);
  if (params.jpeg_compression) x = jpeg_roundtrip(x, encoder_quality(*params.jpeg_compression));
  return resize_to(x, resolution, Interp::kBicubic);
}

std::string to_string(BlurKind kind) {
  switch (kind) {
    case BlurKind::kNone: return "none";
    case BlurKind::kGaussian: return "gaussian";
    case BlurKind::kAverage: return "average";
    case BlurKind::kMedian: return "median";
    case BlurKind::kMotion: return "motion";
  }
  return "?";
}

std::string to_string(Interp interp) {
  switch (interp) {
    case Interp::kNearest: return "nearest";
    case Interp::kBilinear: return "bilinear";
    case Interp::kBicubic: return "bicubic";
    case Interp::kArea: return "area";
  }
  return "?";
}

NLOHMANN_JSON_SERIALIZE_ENUM(BlurKind, {{BlurKind::kNone, "none"},
                                        {BlurKind::kGaussian, "gaussian"},
                                        {BlurKind::kAverage, "average"},
                                        {BlurKind::kMedian, "median"},
                                        {BlurKind::kMotion, "motion"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Interp, {{Interp::kNearest, "nearest"},
                                      {Interp::kBilinear, "bilinear"},
                                      {Interp::kBicubic, "bicubic"},
                                      {Interp::kArea, "area"}})

void to_json(nlohmann::json& j, const DegradationParams& p) {
  j = nlohmann::json{{"blur_kind", p.blur_kind},
                     {"blur_size", p.blur_size},
                     {"motion_angle_deg", p.motion_angle_deg},
                     {"scale", p.scale},
                     {"downsample_interp", p.downsample_interp},
                     {"noise_sigma", p.noise_sigma},
                     {"noise_per_channel", p.noise_per_channel},
                     {"noise_seed", p.noise_seed},
                     {"jpeg_compression", p.jpeg_compression ? nlohmann::json(*p.jpeg_compression)
                                                             : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, DegradationParams& p) {
  DegradationParams d;
  d.blur_kind = j.value("blur_kind", BlurKind::kNone);
  d.blur_size = j.value("blur_size", 0);
  d.motion_angle_deg = j.value("motion_angle_deg", 0.0);
  d.scale = j.value("scale", 1.0);
  d.downsample_interp = j.value("downsample_interp", Interp::kBicubic);
  d.noise_sigma = j.value("noise_sigma", 0.0);
  d.noise_per_channel = j.value("noise_per_channel", false);
  d.noise_seed = j.value("noise_seed", uint64_t{0});
  if (j.contains("jpeg_compression") && !j.at("jpeg_compression").is_null()) {
    d.jpeg_compression = j.at("jpeg_compression").get<int>();
  }
  d.validate();
  p = d;
}

}  // namespace psfr::degrade
