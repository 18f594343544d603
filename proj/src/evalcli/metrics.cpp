#include "metabit/evalcli/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "metabit/evalcli/video.hpp"

namespace metabit {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> window_1d() {
  std::vector<double> g(kWindow);
  double total = 0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Valid separable filtering of an h x w image.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w, const std::vector<double>& g) {
  const int oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * img[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

std::pair<int, int> image_dims(const Tensor& t) {
  if (t.rank() == 2) return {static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1))};
  if (t.rank() == 3 && t.dim(0) == 1) return {static_cast<int>(t.dim(1)), static_cast<int>(t.dim(2))};
  throw ShapeError("ssim expects a single-channel image, got " + to_string(t.shape()));
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double peak) {
  if (a.shape() != b.shape()) throw ShapeError("psnr: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  const auto va = a.to_vector(), vb = b.to_vector();
  if (va.empty()) throw ShapeError("psnr of empty tensors");
  double se = 0;
  for (std::size_t i = 0; i < va.size(); ++i) se += (va[i] - vb[i]) * (va[i] - vb[i]);
  const double mse = se / static_cast<double>(va.size());
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Tensor& a, const Tensor& b, double peak) {
  if (a.shape() != b.shape()) throw ShapeError("ssim: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  const auto [h, w] = image_dims(a);
  if (h < kWindow || w < kWindow) throw ShapeError("ssim needs images of at least 11x11");
  const auto x = a.to_vector(), y = b.to_vector();
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto g = window_1d();
  const auto mx = filter_valid(x, h, w, g), my = filter_valid(y, h, w, g);
  const auto sxx = filter_valid(xx, h, w, g), syy = filter_valid(yy, h, w, g), sxy = filter_valid(xy, h, w, g);
  const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double bpp(std::uint64_t bytes, int width, int height, std::int64_t frames) {
  if (width <= 0 || height <= 0 || frames <= 0) throw std::invalid_argument("bpp: dimensions and frame count must be positive");
  return 8.0 * static_cast<double>(bytes) / (static_cast<double>(width) * height * static_cast<double>(frames));
}

double frame_psnr(const Tensor& a, const Tensor& b, MetricChannels mode) {
  if (mode == MetricChannels::kLuma) return psnr(rgb_luma(a), rgb_luma(b));
  return psnr(a.to(DType::kFloat64), b.to(DType::kFloat64));
}

double frame_ssim(const Tensor& a, const Tensor& b, MetricChannels mode) {
  if (mode == MetricChannels::kLuma) return ssim(rgb_luma(a), rgb_luma(b));
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    const std::int64_t h = a.dim(1), w = a.dim(2);
    Tensor ca({h, w}, DType::kFloat64), cb({h, w}, DType::kFloat64);
    for (std::int64_t i = 0; i < h * w; ++i) {
      ca.set_item(i, a.item(c * h * w + i));
      cb.set_item(i, b.item(c * h * w + i));
    }
    total += ssim(ca, cb);
  }
  return total / 3;
}

EvalReport evaluate(const std::vector<Tensor>& degraded, const std::vector<Tensor>& restored,
                    const std::vector<Tensor>& reference, MetricChannels mode) {
  if (degraded.size() != reference.size() || restored.size() != reference.size()) {
    throw ShapeError("evaluate: frame counts differ (degraded " + std::to_string(degraded.size()) + ", restored " +
                     std::to_string(restored.size()) + ", reference " + std::to_string(reference.size()) + ")");
  }
  if (reference.empty()) throw ShapeError("evaluate: no frames");
  EvalReport r;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    FrameScores s;
    s.frame_index = static_cast<std::int64_t>(i);
    s.psnr_degraded = frame_psnr(degraded[i], reference[i], mode);
    s.psnr_restored = frame_psnr(restored[i], reference[i], mode);
    s.ssim_degraded = frame_ssim(degraded[i], reference[i], mode);
    s.ssim_restored = frame_ssim(restored[i], reference[i], mode);
    r.mean_psnr_degraded += s.psnr_degraded;
    r.mean_psnr_restored += s.psnr_restored;
    r.mean_ssim_degraded += s.ssim_degraded;
    r.mean_ssim_restored += s.ssim_restored;
    r.frames.push_back(s);
  }
  const double n = static_cast<double>(reference.size());
  r.mean_psnr_degraded /= n;
  r.mean_psnr_restored /= n;
  r.mean_ssim_degraded /= n;
  r.mean_ssim_restored /= n;
  r.delta_psnr = r.mean_psnr_restored - r.mean_psnr_degraded;
  r.delta_ssim = r.mean_ssim_restored - r.mean_ssim_degraded;
  return r;
}

void write_csv(std::ostream& os, const EvalReport& report) {
  os << "frame_index,psnr_degraded,psnr_restored,ssim_degraded,ssim_restored\n";
  os << std::setprecision(10);
  for (const auto& f : report.frames) {
    os << f.frame_index << ',' << f.psnr_degraded << ',' << f.psnr_restored << ',' << f.ssim_degraded << ','
       << f.ssim_restored << '\n';
  }
}

void write_text(std::ostream& os, const EvalReport& report) {
  os << std::fixed << std::setprecision(4);
  os << "frames:        " << report.frames.size() << "\n";
  os << "PSNR degraded: " << report.mean_psnr_degraded << " dB\n";
  os << "PSNR restored: " << report.mean_psnr_restored << " dB\n";
  os << "SSIM degraded: " << report.mean_ssim_degraded << "\n";
  os << "SSIM restored: " << report.mean_ssim_restored << "\n";
  os << "delta PSNR:    " << report.delta_psnr << " dB\n";
  os << "delta SSIM:    " << report.delta_ssim << "\n";
  if (report.bpp) os << "bpp:           " << *report.bpp << "\n";
  os << std::defaultfloat;
}

}  // namespace metabit
