#include "psfr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <set>

#include <opencv2/imgproc.hpp>

#include "psfr/errors.hpp"

namespace psfr {
namespace {

// Class indices of the parts drawn by make_synthetic_face.
enum Part : int64_t {
  kBackground = 0, kSkin = 1, kNose = 2, kLeftEye = 4, kRightEye = 5, kLeftBrow = 6, kRightBrow = 7,
  kMouth = 10, kUpperLip = 11, kLowerLip = 12, kHair = 13, kNeck = 17,
};

torch::Tensor labels_from_mat(const cv::Mat& gray) {
  return torch::from_blob(gray.data, {gray.rows, gray.cols}, torch::kUInt8).to(torch::kInt64).clone();
}

}  // namespace

FaceDataset::FaceDataset(std::vector<FaceSample> samples) : samples_(std::move(samples)) {
  for (const auto& s : samples_) {
    if (s.hq.height() != s.labels.size(0) || s.hq.width() != s.labels.size(1)) {
      throw std::invalid_argument("label map and image sizes differ");
    }
    check_labels(s.labels);
  }
}

FaceDataset FaceDataset::from_directories(const std::filesystem::path& hq_dir,
                                          const std::filesystem::path& label_dir, int resolution) {
  std::vector<FaceSample> samples;
  for (const auto& path : list_pngs(hq_dir)) {
    const auto label_path = label_dir / path.filename();
    if (!std::filesystem::exists(label_path)) throw IoError(label_path, "missing label map for " + path.string());
    Image8 hq = read_png(path);
    auto labels = read_label_png(label_path);
    if (hq.height() != resolution || hq.width() != resolution) {
      cv::Mat out;
      cv::resize(hq.mat(), out, cv::Size(resolution, resolution), 0, 0, cv::INTER_LINEAR);
      hq = Image8(out);
    }
    if (labels.size(0) != resolution || labels.size(1) != resolution) {
      cv::Mat gray(static_cast<int>(labels.size(0)), static_cast<int>(labels.size(1)), CV_8UC1);
      auto bytes = labels.to(torch::kUInt8).contiguous();
      std::memcpy(gray.data, bytes.data_ptr<uint8_t>(), bytes.numel());
      cv::Mat out;
      cv::resize(gray, out, cv::Size(resolution, resolution), 0, 0, cv::INTER_NEAREST);
      labels = labels_from_mat(out);
    }
    samples.push_back({std::move(hq), std::move(labels)});
  }
  if (samples.empty()) throw IoError(hq_dir, "dataset is empty");
  return FaceDataset(std::move(samples));
}

FaceDataset FaceDataset::synthetic(int64_t count, int resolution, uint64_t seed,
                                   const std::vector<int64_t>& classes) {
  if (count < 1) throw std::invalid_argument("synthetic dataset needs at least one image");
  std::vector<FaceSample> samples;
  for (int64_t i = 0; i < count; ++i) {
    samples.push_back(make_synthetic_face(seed * 1000003ULL + static_cast<uint64_t>(i), resolution, classes));
  }
  return FaceDataset(std::move(samples));
}

FaceDataset FaceDataset::from_config(const PipelineConfig& config) {
  const int res = static_cast<int>(config.train.resolution);
  if (config.data.synthetic_count > 0) {
    return synthetic(config.data.synthetic_count, res, config.data.synthetic_seed, config.data.synthetic_classes);
  }
  if (config.data.hq_dir.empty() || config.data.label_dir.empty()) {
    throw ConfigError("[data] needs hq_dir and label_dir, or synthetic_count > 0");
  }
  return from_directories(config.data.hq_dir, config.data.label_dir, res);
}

FaceSample make_synthetic_face(uint64_t seed, int resolution, const std::vector<int64_t>& classes) {
  if (resolution < 8) throw std::invalid_argument("synthetic faces need a resolution of at least 8");
  const std::set<int64_t> wanted(classes.begin(), classes.end());
  for (auto c : wanted) {
    if (c < 0 || c >= kNumClasses) throw std::invalid_argument("synthetic class out of range");
  }
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const double r = resolution;

  // Geometry in units of the image side so faces look alike at every resolution.
  const double cx = r * uni(0.44, 0.56), cy = r * uni(0.48, 0.58);
  const double fw = r * uni(0.24, 0.31), fh = r * uni(0.30, 0.37);
  const double tilt = uni(-12.0, 12.0);
  const cv::Scalar skin(uni(150, 235), uni(105, 180), uni(80, 150));
  const cv::Scalar hair(uni(20, 120), uni(15, 90), uni(10, 70));
  const cv::Scalar bg0(uni(40, 220), uni(40, 220), uni(40, 220));
  const cv::Scalar bg1(uni(40, 220), uni(40, 220), uni(40, 220));
  const cv::Scalar lips(uni(150, 210), uni(50, 100), uni(60, 110));
  const double stripe_freq = uni(0.15, 0.35) * 64.0 / r;
  const double stripe_phase = uni(0.0, 6.28);

  cv::Mat rgb(resolution, resolution, CV_8UC3);
  cv::Mat lab = cv::Mat::zeros(resolution, resolution, CV_8UC1);
  for (int y = 0; y < resolution; ++y) {
    const double t = y / (r - 1);
    for (int x = 0; x < resolution; ++x) {
      auto* px = rgb.ptr<uint8_t>(y) + 3 * x;
      for (int c = 0; c < 3; ++c) px[c] = cv::saturate_cast<uint8_t>(bg0[c] * (1 - t) + bg1[c] * t);
    }
  }

  auto part = [&](int64_t cls, const auto& draw_mask, const cv::Scalar& colour, double texture) {
    if (!wanted.contains(cls)) return;
    cv::Mat mask = cv::Mat::zeros(resolution, resolution, CV_8UC1);
    draw_mask(mask);
    for (int y = 0; y < resolution; ++y) {
      const auto* m = mask.ptr<uint8_t>(y);
      for (int x = 0; x < resolution; ++x) {
        if (!m[x]) continue;
        const double shade = texture * std::sin(stripe_freq * (x + 0.5 * y) + stripe_phase);
        auto* px = rgb.ptr<uint8_t>(y) + 3 * x;
        for (int c = 0; c < 3; ++c) px[c] = cv::saturate_cast<uint8_t>(colour[c] + shade);
        lab.at<uint8_t>(y, x) = static_cast<uint8_t>(cls);
      }
    }
  };
  auto ellipse = [&](double ex, double ey, double ax, double ay, double angle) {
    return [=](cv::Mat& m) {
      cv::ellipse(m, cv::Point2d(ex, ey), cv::Size2d(std::max(ax, 1.0), std::max(ay, 1.0)), angle, 0, 360,
                  cv::Scalar(255), cv::FILLED, cv::LINE_8);
    };
  };

  const double rad = tilt * std::numbers::pi / 180.0;
  auto at = [&](double dx, double dy) {
    return cv::Point2d(cx + dx * std::cos(rad) - dy * std::sin(rad), cy + dx * std::sin(rad) + dy * std::cos(rad));
  };

  part(kHair, ellipse(at(0, -0.25 * fh).x, at(0, -0.25 * fh).y, fw * 1.25, fh * 1.1, tilt), hair, 18.0);
  part(kNeck, ellipse(at(0, 1.1 * fh).x, at(0, 1.1 * fh).y, fw * 0.45, fh * 0.5, tilt), skin * 0.85, 0.0);
  part(kSkin, ellipse(cx, cy, fw, fh, tilt), skin, 4.0);
  for (int side : {-1, 1}) {
    const auto eye = at(side * 0.42 * fw, -0.18 * fh);
    const auto brow = at(side * 0.42 * fw, -0.36 * fh);
    part(side < 0 ? kLeftEye : kRightEye, ellipse(eye.x, eye.y, 0.2 * fw, 0.09 * fh, tilt),
         cv::Scalar(235, 235, 235) - hair * 0.2, 0.0);
    part(side < 0 ? kLeftBrow : kRightBrow, ellipse(brow.x, brow.y, 0.24 * fw, 0.045 * fh, tilt), hair, 6.0);
  }
  const auto nose = at(0, 0.1 * fh);
  part(kNose, ellipse(nose.x, nose.y, 0.13 * fw, 0.2 * fh, tilt), skin * 0.88, 0.0);
  const auto mouth = at(0, 0.55 * fh);
  part(kMouth, ellipse(mouth.x, mouth.y, 0.4 * fw, 0.14 * fh, tilt), lips * 0.6, 0.0);
  part(kUpperLip, ellipse(at(0, 0.5 * fh).x, at(0, 0.5 * fh).y, 0.36 * fw, 0.05 * fh, tilt), lips, 0.0);
  part(kLowerLip, ellipse(at(0, 0.61 * fh).x, at(0, 0.61 * fh).y, 0.34 * fw, 0.06 * fh, tilt), lips, 0.0);

  return {Image8(rgb), labels_from_mat(lab)};
}

}  // namespace psfr
