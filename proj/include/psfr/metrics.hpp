#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include <Eigen/Dense>

#include "psfr/image.hpp"

namespace psfr::metrics {

/// 10 log10(255^2 / MSE) over all channels; +infinity for identical images.
double psnr(const Image8& a, const Image8& b);

/// Mean SSIM on ITU-R 601 luma: 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 255, valid-region filtering.
double ssim(const Image8& a, const Image8& b);

inline constexpr std::array<double, 5> kMsSsimWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// Smallest image side accepted by ms_ssim.
inline constexpr int kMsSsimMinSide = (1 << (kMsSsimWeights.size() - 1)) * 11;

/// Five-scale MS-SSIM with 2x2 average downsampling between scales.
/// Throws std::invalid_argument when either side is below kMsSsimMinSide.
double ms_ssim(const Image8& a, const Image8& b);

/// Gaussian statistics of a feature set.
struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  int64_t n = 0;

  /// Checks n >= 2, matching dimensions and covariance symmetry within 1e-8.
  void validate() const;
};

/// Mean and unbiased covariance of the rows of `features` (n x d).
FeatureStats compute_stats(const Eigen::MatrixXd& features);

/// Eigenvalues below this are treated as a non-PSD input rather than round-off.
inline constexpr double kPsdTolerance = 1e-6;

/// ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)).
double frechet_distance(const FeatureStats& s1, const FeatureStats& s2);

/// Feature file: "PSFRFEAT" | u64 d | u64 n | n*d little-endian float32, row-major.
inline constexpr char kFeatureMagic[8] = {'P', 'S', 'F', 'R', 'F', 'E', 'A', 'T'};

Eigen::MatrixXd read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const Eigen::MatrixXd& features);

}  // namespace psfr::metrics
