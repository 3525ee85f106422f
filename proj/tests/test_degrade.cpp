#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include "psfr/dataset.hpp"
#include "psfr/degrade.hpp"
#include "psfr/metrics.hpp"

using namespace psfr;
using namespace psfr::degrade;

namespace {

Image8 face(int side = 128, uint64_t seed = 3) { return make_synthetic_face(seed, side, {0, 1, 2, 4, 5, 10, 13}).hq; }

Image8 noise_image(int side, uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image8 img(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<uint8_t>(rng() % 256);
  return img;
}

}  // namespace

TEST(Degrade, IdentityParamsAreBitExact) {
  const auto hq = face(512);
  EXPECT_TRUE(degrade::degrade(hq, identity_params()) == hq);
  const auto small = face(64);
  EXPECT_TRUE(degrade::degrade(small, identity_params(), 64) == small);
}

TEST(Degrade, RejectsWrongInputSize) {
  EXPECT_THROW(degrade::degrade(face(128), identity_params()), std::invalid_argument);
  EXPECT_THROW(degrade::degrade(Image8(64, 32), identity_params(), 64), std::invalid_argument);
}

TEST(Degrade, SameSeedSameParamsAndBytes) {
  const auto hq = face(512);
  for (uint64_t seed : {0ULL, 17ULL, 991ULL}) {
    const auto a = sample_params(seed), b = sample_params(seed);
    EXPECT_EQ(a, b);
    EXPECT_TRUE(degrade::degrade(hq, a) == degrade::degrade(hq, b));
  }
}

TEST(Degrade, DifferentSeedsDiffer) {
  int distinct = 0;
  for (uint64_t s = 0; s < 20; ++s) distinct += sample_params(s) == sample_params(s + 1000) ? 0 : 1;
  EXPECT_EQ(distinct, 20);
}

TEST(Degrade, SampledParamsAlwaysValidate) {
  for (uint64_t s = 0; s < 3000; ++s) EXPECT_NO_THROW(sample_params(s).validate());
}

TEST(Degrade, SampledRatesAndRanges) {
  int blur = 0, noise = 0, jpeg = 0, per_channel = 0;
  std::array<int, 5> kinds{};
  std::array<int, 4> interps{};
  double smin = 1, smax = 0;
  for (uint64_t s = 0; s < 10000; ++s) {
    const auto p = sample_params(s);
    ++kinds[static_cast<int>(p.blur_kind)];
    ++interps[static_cast<int>(p.downsample_interp)];
    blur += p.blur_kind != BlurKind::kNone;
    if (p.blur_kind != BlurKind::kNone) EXPECT_EQ(p.blur_size % 2, 1);
    if (p.blur_kind == BlurKind::kMotion) {
      EXPECT_GE(p.motion_angle_deg, 0.0);
      EXPECT_LT(p.motion_angle_deg, 180.0);
    }
    if (p.noise_sigma > 0) {
      ++noise;
      per_channel += p.noise_per_channel;
    }
    jpeg += p.jpeg_compression.has_value();
    smin = std::min(smin, p.scale);
    smax = std::max(smax, p.scale);
  }
  EXPECT_NEAR(blur / 1e4, 0.5, 0.02);
  EXPECT_NEAR(noise / 1e4, 0.2, 0.02);
  EXPECT_NEAR(jpeg / 1e4, 0.7, 0.02);
  EXPECT_NEAR(per_channel / static_cast<double>(noise), 0.5, 0.05);
  for (int k = 1; k < 5; ++k) EXPECT_NEAR(kinds[k] / static_cast<double>(blur), 0.25, 0.03);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(interps[k] / 1e4, 0.25, 0.02);
  EXPECT_GE(smin, 32.0 / 512);
  EXPECT_LE(smax, 256.0 / 512);
  // The draw should actually span the interval.
  EXPECT_LT(smin, 32.0 / 512 + 0.01);
  EXPECT_GT(smax, 256.0 / 512 - 0.01);
}

TEST(Degrade, ValidateRejectsOutOfRange) {
  auto p = identity_params();
  p.blur_kind = BlurKind::kGaussian;
  p.blur_size = 17;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.blur_size = 4;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.blur_kind = BlurKind::kMedian;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.blur_kind = BlurKind::kMotion;
  p.blur_size = 3;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.blur_size = 25;
  EXPECT_NO_THROW(p.validate());

  p = identity_params();
  p.scale = 0.6;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.scale = 0.05;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = identity_params();
  p.noise_sigma = 26;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = identity_params();
  p.jpeg_compression = 9;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.jpeg_compression = 66;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Degrade, CompositionOrderMatchesSubOperations) {
  const auto hq = face(512);
  for (uint64_t seed : {1ULL, 5ULL, 42ULL, 77ULL, 123ULL}) {
    auto p = sample_params(seed);
    // Force every stage on so the order matters.
    if (p.blur_kind == BlurKind::kNone) {
      p.blur_kind = BlurKind::kGaussian;
      p.blur_size = 7;
    }
    p.noise_sigma = 9.0;
    p.jpeg_compression = 40;
    Image8 x = blur(hq, p.blur_kind, p.blur_size, p.motion_angle_deg);
    x = rescale(x, p.scale, p.downsample_interp);
    std::mt19937_64 rng(p.noise_seed);
    x = add_awgn(x, p.noise_sigma, p.noise_per_channel, rng);
    x = jpeg_roundtrip(x, 100 - *p.jpeg_compression);
    x = resize_to(x, 512, Interp::kBicubic);
    EXPECT_TRUE(degrade::degrade(hq, p) == x) << "seed " << seed;
  }
}

TEST(Degrade, BlursPreserveConstantInterior) {
  const Image8 gray(64, 64, 137);
  for (auto kind : {BlurKind::kGaussian, BlurKind::kAverage, BlurKind::kMedian, BlurKind::kMotion}) {
    for (int size : {3, 7, 15}) {
      const auto out = blur(gray, kind, kind == BlurKind::kMotion ? size + 2 : size, 33.0);
      for (int y = 10; y < 54; ++y)
        for (int x = 10; x < 54; ++x) ASSERT_EQ(out.at(y, x, 1), 137);
    }
  }
  auto p = identity_params();
  p.blur_kind = BlurKind::kMedian;
  p.blur_size = 9;
  p.scale = 0.25;
  const auto out = degrade::degrade(gray, p, 64);
  for (int y = 8; y < 56; ++y)
    for (int x = 8; x < 56; ++x) ASSERT_EQ(out.at(y, x, 0), 137);
}

TEST(Degrade, MotionKernelIsNormalizedLine) {
  for (int size : {5, 11, 25}) {
    for (double angle : {0.0, 30.0, 45.0, 90.0, 135.0, 179.0}) {
      const auto k = motion_kernel(size, angle);
      EXPECT_NEAR(cv::sum(k)[0], 1.0, 1e-6);
      int on = 0;
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) on += k.at<float>(y, x) > 0;
      // A line of length `size` through the centre; on the diagonal it spans only size / sqrt(2) cells per axis.
      EXPECT_GE(on, static_cast<int>(size / std::sqrt(2.0)));
      EXPECT_LE(on, 2 * size);
      EXPECT_GT(k.at<float>(size / 2, size / 2), 0.0F);
    }
  }
}

TEST(Degrade, MotionBlurOfPointMatchesHandConvolution) {
  const int side = 41, size = 15;
  const double angle = 30.0;
  Image8 img(side, side, 0);
  for (int c = 0; c < 3; ++c) img.at(20, 20, c) = 255;
  const auto out = blur(img, BlurKind::kMotion, size, angle);
  const auto k = motion_kernel(size, angle);
  const int r = size / 2;
  double sx = 0, sy = 0, mass = 0;
  double max_extent = 0;
  const double dir_x = std::cos(angle * std::numbers::pi / 180), dir_y = -std::sin(angle * std::numbers::pi / 180);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      // out(y, x) = sum_ij k(i, j) * img(y + i - r, x + j - r); only the bright pixel contributes.
      const int i = 20 - y + r, j = 20 - x + r;
      double want = 0;
      if (i >= 0 && i < size && j >= 0 && j < size) want = 255.0 * k.at<float>(i, j);
      EXPECT_NEAR(out.at(y, x, 0), want, 0.5 + 1e-9) << y << "," << x;
      if (out.at(y, x, 0) > 0) {
        const double dx = x - 20, dy = y - 20;
        // Every lit pixel lies within a pixel of the kernel's direction line.
        EXPECT_LE(std::abs(dx * dir_y - dy * dir_x), 1.0);
        max_extent = std::max(max_extent, std::abs(dx * dir_x + dy * dir_y));
        sx += dx * out.at(y, x, 0);
        sy += dy * out.at(y, x, 0);
        mass += out.at(y, x, 0);
      }
    }
  }
  EXPECT_NEAR(2 * max_extent + 1, size, 1.5);
  EXPECT_NEAR(sx / mass, 0.0, 0.5);
  EXPECT_NEAR(sy / mass, 0.0, 0.5);
}

TEST(Degrade, AwgnZeroSigmaIsIdentityAndClamps) {
  const auto img = face(64);
  std::mt19937_64 rng(1);
  EXPECT_TRUE(add_awgn(img, 0.0, true, rng) == img);
  EXPECT_THROW(add_awgn(img, -1.0, false, rng), std::invalid_argument);

  const Image8 white(32, 32, 250);
  std::mt19937_64 rng2(2);
  const auto noisy = add_awgn(white, 25.5, true, rng2);
  bool saw_255 = false;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) saw_255 = saw_255 || noisy.at(y, x, 0) == 255;
  EXPECT_TRUE(saw_255);
}

TEST(Degrade, AwgnSharedVersusPerChannel) {
  const Image8 gray(64, 64, 128);
  std::mt19937_64 a(5), b(5);
  const auto shared = add_awgn(gray, 10.0, false, a);
  const auto indep = add_awgn(gray, 10.0, true, b);
  int shared_equal = 0, indep_equal = 0;
  double var = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      shared_equal += shared.at(y, x, 0) == shared.at(y, x, 1) && shared.at(y, x, 1) == shared.at(y, x, 2);
      indep_equal += indep.at(y, x, 0) == indep.at(y, x, 1) && indep.at(y, x, 1) == indep.at(y, x, 2);
      var += std::pow(shared.at(y, x, 0) - 128.0, 2);
    }
  }
  EXPECT_EQ(shared_equal, 64 * 64);
  EXPECT_LT(indep_equal, 64 * 64 / 10);
  EXPECT_NEAR(std::sqrt(var / (64 * 64)), 10.0, 1.0);
}

TEST(Degrade, JpegHigherCompressionLevelLosesMore) {
  const auto img = face(256);
  const double mild = metrics::psnr(img, jpeg_roundtrip(img, encoder_quality(10)));
  const double harsh = metrics::psnr(img, jpeg_roundtrip(img, encoder_quality(65)));
  EXPECT_GT(mild, harsh);
  // Encoder-quality view of the same monotonicity.
  EXPECT_GT(metrics::psnr(img, jpeg_roundtrip(img, 65)), metrics::psnr(img, jpeg_roundtrip(img, 10)));
  EXPECT_EQ(encoder_quality(10), 90);
  EXPECT_EQ(encoder_quality(65), 35);
  EXPECT_THROW(jpeg_roundtrip(img, 0), std::invalid_argument);
  EXPECT_THROW(jpeg_roundtrip(img, 101), std::invalid_argument);
}

TEST(Degrade, RescaleAndResizeShapes) {
  const auto img = noise_image(512, 4);
  for (auto interp : {Interp::kNearest, Interp::kBilinear, Interp::kBicubic, Interp::kArea}) {
    const auto small = rescale(img, 0.0625, interp);
    EXPECT_EQ(small.height(), 32);
    EXPECT_EQ(resize_to(small, 512, interp).width(), 512);
  }
  EXPECT_TRUE(rescale(img, 1.0, Interp::kArea) == img);
  EXPECT_THROW(rescale(img, 0.0, Interp::kArea), std::invalid_argument);
}

TEST(Degrade, OutputAlwaysFullResolution) {
  const auto hq = face(512);
  for (uint64_t s = 0; s < 6; ++s) {
    const auto lq = degrade::degrade(hq, sample_params(s));
    EXPECT_EQ(lq.height(), 512);
    EXPECT_EQ(lq.width(), 512);
  }
}

TEST(Degrade, JsonRoundTripAndValidation) {
  for (uint64_t s = 0; s < 50; ++s) {
    const auto p = sample_params(s);
    nlohmann::json j = p;
    EXPECT_EQ(j.get<DegradationParams>(), p);
  }
  nlohmann::json bad = sample_params(3);
  bad["scale"] = 0.9;
  EXPECT_THROW(bad.get<DegradationParams>(), std::invalid_argument);
}
