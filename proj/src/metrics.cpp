#include "psfr/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <vector>

#include <opencv2/imgproc.hpp>

#include "psfr/errors.hpp"

namespace psfr::metrics {
namespace {

void require_same_shape(const Image8& a, const Image8& b) {
  if (a.empty() || a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument("metric inputs must be non-empty and equally sized");
  }
}

cv::Mat luma(const Image8& img) {
  cv::Mat out(img.height(), img.width(), CV_64F);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = out.ptr<double>(y);
    for (int x = 0; x < img.width(); ++x) {
      row[x] = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
    }
  }
  return out;
}

/// Correlates with the 11x11 Gaussian window and keeps only fully covered pixels.
cv::Mat filter_valid(const cv::Mat& x) {
  static const cv::Mat window = [] {
    cv::Mat g = cv::getGaussianKernel(11, 1.5, CV_64F);
    return cv::Mat(g * g.t());
  }();
  cv::Mat full;
  cv::filter2D(x, full, CV_64F, window, cv::Point(-1, -1), 0.0, cv::BORDER_CONSTANT);
  const int r = window.rows / 2;
  return full(cv::Rect(r, r, x.cols - 2 * r, x.rows - 2 * r)).clone();
}

struct SsimTerms {
  double ssim;
  double cs;  // contrast-structure term only
};

SsimTerms ssim_terms(const cv::Mat& x, const cv::Mat& y) {
  if (x.rows < 11 || x.cols < 11) throw std::invalid_argument("SSIM needs images of at least 11x11");
  constexpr double kC1 = (0.01 * 255) * (0.01 * 255);
  constexpr double kC2 = (0.03 * 255) * (0.03 * 255);
  cv::Mat mx = filter_valid(x), my = filter_valid(y);
  cv::Mat sxx = filter_valid(x.mul(x)) - mx.mul(mx);
  cv::Mat syy = filter_valid(y.mul(y)) - my.mul(my);
  cv::Mat sxy = filter_valid(x.mul(y)) - mx.mul(my);
  cv::Mat cs_map = (2 * sxy + kC2) / (sxx + syy + kC2);
  cv::Mat l_map = (2 * mx.mul(my) + kC1) / (mx.mul(mx) + my.mul(my) + kC1);
  return {cv::mean(l_map.mul(cs_map))[0], cv::mean(cs_map)[0]};
}

cv::Mat halve(const cv::Mat& x) {
  cv::Mat out;
  cv::resize(x, out, cv::Size(x.cols / 2, x.rows / 2), 0, 0, cv::INTER_AREA);
  return out;
}

}  // namespace

double psnr(const Image8& a, const Image8& b) {
  require_same_shape(a, b);
  double sse = 0.0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const double d = static_cast<double>(a.at(y, x, c)) - b.at(y, x, c);
        sse += d * d;
      }
    }
  }
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / (3.0 * a.height() * a.width());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const Image8& a, const Image8& b) {
  require_same_shape(a, b);
  return ssim_terms(luma(a), luma(b)).ssim;
}

double ms_ssim(const Image8& a, const Image8& b) {
  require_same_shape(a, b);
  if (std::min(a.height(), a.width()) < kMsSsimMinSide) {
    throw std::invalid_argument("MS-SSIM needs both sides >= " + std::to_string(kMsSsimMinSide));
  }
  cv::Mat x = luma(a), y = luma(b);
  double result = 1.0;
  for (size_t level = 0; level < kMsSsimWeights.size(); ++level) {
    const auto terms = ssim_terms(x, y);
    const bool last = level + 1 == kMsSsimWeights.size();
    // Negative terms would make the fractional power undefined.
    result *= std::pow(std::max(last ? terms.ssim : terms.cs, 0.0), kMsSsimWeights[level]);
    if (!last) {
      x = halve(x);
      y = halve(y);
    }
  }
  return result;
}

void FeatureStats::validate() const {
  if (n < 2) throw std::invalid_argument("feature statistics need at least two samples");
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw std::invalid_argument("covariance shape does not match the mean");
  }
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-8) {
    throw std::invalid_argument("covariance is not symmetric");
  }
}

FeatureStats compute_stats(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) throw std::invalid_argument("need at least two feature rows");
  FeatureStats s;
  s.n = features.rows();
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(s.n - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

namespace {

/// Symmetric eigendecomposition with tolerance-checked clipping of negative eigenvalues.
Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> psd_eigen(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw std::runtime_error(std::string("eigendecomposition failed for ") + what);
  if (es.eigenvalues().size() > 0 && es.eigenvalues().minCoeff() < -kPsdTolerance) {
    throw std::invalid_argument(std::string(what) + " is not positive semidefinite");
  }
  return es;
}

}  // namespace

double frechet_distance(const FeatureStats& s1, const FeatureStats& s2) {
  s1.validate();
  s2.validate();
  if (s1.mean.size() != s2.mean.size()) throw std::invalid_argument("feature dimensions differ");

  // tr((S1 S2)^(1/2)) = tr((R S2 R)^(1/2)) with R = S1^(1/2); R S2 R is symmetric PSD.
  auto e1 = psd_eigen(s1.cov, "first covariance");
  psd_eigen(s2.cov, "second covariance");
  const Eigen::VectorXd root = e1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd r = e1.eigenvectors() * root.asDiagonal() * e1.eigenvectors().transpose();
  Eigen::MatrixXd inner = r * s2.cov * r;
  inner = 0.5 * (inner + inner.transpose());
  auto e2 = psd_eigen(inner, "covariance product");
  const double tr_sqrt = e2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double d = (s1.mean - s2.mean).squaredNorm() + s1.cov.trace() + s2.cov.trace() - 2.0 * tr_sqrt;
  return std::max(d, 0.0);
}

Eigen::MatrixXd read_features(const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open feature file");
  char magic[8];
  uint64_t d = 0, n = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&d), sizeof(d));
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || std::memcmp(magic, kFeatureMagic, sizeof(magic)) != 0) throw IoError(path, "bad feature header");
  // Check the payload size against the file before allocating for it.
  const uint64_t payload = std::filesystem::file_size(path) - 24;
  if (d == 0 || n > payload / 4 / d || d * n * 4 != payload) {
    throw IoError(path, "feature payload does not match the header (d=" + std::to_string(d) +
                            ", n=" + std::to_string(n) + ")");
  }
  std::vector<float> data(d * n);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!in) throw IoError(path, "truncated feature data");
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(path, "trailing bytes after feature data");
  Eigen::MatrixXd out(n, d);
  for (uint64_t i = 0; i < n; ++i) {
    for (uint64_t j = 0; j < d; ++j) out(i, j) = data[i * d + j];
  }
  return out;
}

void write_features(const std::filesystem::path& path, const Eigen::MatrixXd& features) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open feature file for writing");
  const uint64_t n = features.rows(), d = features.cols();
  out.write(kFeatureMagic, sizeof(kFeatureMagic));
  out.write(reinterpret_cast<const char*>(&d), sizeof(d));
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (uint64_t i = 0; i < n; ++i) {
    for (uint64_t j = 0; j < d; ++j) {
      const float v = static_cast<float>(features(i, j));
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
  if (!out) throw IoError(path, "write failed");
}

}  // namespace psfr::metrics
