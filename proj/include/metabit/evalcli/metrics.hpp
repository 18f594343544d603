#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "metabit/tensor/tensor.hpp"

namespace metabit {

inline constexpr double kPsnrCap = 100.0;

// 10 log10(peak^2 / MSE), capped at kPsnrCap when MSE < 1e-10.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5) of two
// single-channel images ([H, W] or [1, H, W]); K1 = 0.01, K2 = 0.03.
double ssim(const Tensor& a, const Tensor& b, double peak = 1.0);

// 8 * bytes / (width * height * frames).
double bpp(std::uint64_t bytes, int width, int height, std::int64_t frames);

enum class MetricChannels { kLuma, kRgbMean };

// Frame-level metrics on RGB [3, H, W] frames in [0, 1].
double frame_psnr(const Tensor& a, const Tensor& b, MetricChannels mode = MetricChannels::kLuma);
double frame_ssim(const Tensor& a, const Tensor& b, MetricChannels mode = MetricChannels::kLuma);

struct FrameScores {
  std::int64_t frame_index = 0;
  double psnr_degraded = 0, psnr_restored = 0;
  double ssim_degraded = 0, ssim_restored = 0;
};

struct EvalReport {
  std::vector<FrameScores> frames;
  double mean_psnr_degraded = 0, mean_psnr_restored = 0;
  double mean_ssim_degraded = 0, mean_ssim_restored = 0;
  double delta_psnr = 0, delta_ssim = 0;
  std::optional<double> bpp;
};

EvalReport evaluate(const std::vector<Tensor>& degraded, const std::vector<Tensor>& restored,
                    const std::vector<Tensor>& reference, MetricChannels mode = MetricChannels::kLuma);

// Header: frame_index,psnr_degraded,psnr_restored,ssim_degraded,ssim_restored
void write_csv(std::ostream& os, const EvalReport& report);
void write_text(std::ostream& os, const EvalReport& report);

}  // namespace metabit
