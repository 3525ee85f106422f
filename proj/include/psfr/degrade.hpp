#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

#include "psfr/image.hpp"

namespace psfr::degrade {

enum class BlurKind { kNone, kGaussian, kAverage, kMedian, kMotion };
enum class Interp { kNearest, kBilinear, kBicubic, kArea };

/// Pipeline resolution for HQ inputs and LQ outputs.
inline constexpr int kDefaultResolution = 512;

inline constexpr double kMinScale = 32.0 / 512.0;
inline constexpr double kMaxScale = 256.0 / 512.0;
inline constexpr double kMaxNoiseSigma = 0.1 * 255.0;
inline constexpr int kMinJpegCompression = 10;
inline constexpr int kMaxJpegCompression = 65;

/// One realization of the blur / downsample / noise / JPEG chain.
///
/// `jpeg_compression` is a compression *level*: higher means stronger
/// compression. The encoder quality used is 100 - level.
struct DegradationParams {
  BlurKind blur_kind = BlurKind::kNone;
  int blur_size = 0;
  double motion_angle_deg = 0.0;
  double scale = 1.0;
  Interp downsample_interp = Interp::kBicubic;
  double noise_sigma = 0.0;
  bool noise_per_channel = false;
  uint64_t noise_seed = 0;
  std::optional<int> jpeg_compression;

  bool operator==(const DegradationParams&) const = default;

  /// Throws std::invalid_argument when a field violates its documented range.
  /// A scale of exactly 1 is accepted as the identity.
  void validate() const;
};

/// Parameters that leave the image untouched.
DegradationParams identity_params();

/// Draws a fresh parameter set; every draw comes from `seed` alone.
DegradationParams sample_params(uint64_t seed);

int encoder_quality(int compression_level);

cv::Mat motion_kernel(int size, double angle_deg);

Image8 blur(const Image8& img, BlurKind kind, int size, double motion_angle_deg = 0.0);
Image8 rescale(const Image8& img, double factor, Interp interp);
Image8 resize_to(const Image8& img, int side, Interp interp);
Image8 add_awgn(const Image8& img, double sigma, bool per_channel, std::mt19937_64& rng);
/// Encodes with the given encoder quality (1..100) and decodes again.
Image8 jpeg_roundtrip(const Image8& img, int quality);

/// blur -> downsample -> noise -> JPEG -> bicubic resize back to `resolution`.
Image8 degrade(const Image8& hq, const DegradationParams& params,
               int resolution = kDefaultResolution);

std::string to_string(BlurKind kind);
std::string to_string(Interp interp);

void to_json(nlohmann::json& j, const DegradationParams& p);
void from_json(const nlohmann::json& j, DegradationParams& p);

}  // namespace psfr::degrade
