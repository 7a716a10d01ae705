#pragma once

#include <cmath>
#include <optional>

#include "pocusiq/core/error.hpp"
#include "pocusiq/filter.hpp"
#include "pocusiq/image.hpp"

namespace pocusiq {

/// Gaussian-window SSIM settings. With no explicit dynamic range, L is taken
/// from the images' declared intensity domain.
struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  std::optional<double> dynamic_range;

  double c1(double L) const noexcept { return (k1 * L) * (k1 * L); }
  double c2(double L) const noexcept { return (k2 * L) * (k2 * L); }
  std::vector<double> kernel() const { return filter::gaussian_kernel(sigma, window / 2); }
};

/// SSIM map over all fully covered window positions ("valid" region),
/// computed from raw buffers. Shared with the differentiable SSIM loss.
inline std::vector<double> ssim_map(const std::vector<double>& a, const std::vector<double>& b,
                                    int width, int height, const SsimConfig& cfg, double L) {
  const auto k = cfg.kernel();
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter::separable_valid(a, width, height, k);
  const auto mu_b = filter::separable_valid(b, width, height, k);
  const auto e_aa = filter::separable_valid(aa, width, height, k);
  const auto e_bb = filter::separable_valid(bb, width, height, k);
  const auto e_ab = filter::separable_valid(ab, width, height, k);
  const double c1 = cfg.c1(L);
  const double c2 = cfg.c2(L);
  std::vector<double> map(mu_a.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    map[i] = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return map;
}

/// Mean SSIM over the valid window positions.
inline double ssim(const Image& ref, const Image& test, const SsimConfig& cfg = {}) {
  if (!ref.same_shape(test)) throw UsageError("ssim: image dimensions differ");
  if (ref.domain() != test.domain()) throw UsageError("ssim: images declare different intensity domains");
  if (ref.width() < cfg.window || ref.height() < cfg.window) {
    throw UsageError("ssim: image smaller than the " + std::to_string(cfg.window) + "px window");
  }
  const double L = cfg.dynamic_range.value_or(ref.bounds().range());
  const std::vector<double> a(ref.pixels().begin(), ref.pixels().end());
  const std::vector<double> b(test.pixels().begin(), test.pixels().end());
  const auto map = ssim_map(a, b, ref.width(), ref.height(), cfg, L);
  double sum = 0.0;
  for (double v : map) sum += v;
  return sum / static_cast<double>(map.size());
}

inline constexpr double kPsnrCapDb = 100.0;

/// 10 log10(MAX^2 / MSE) with MAX the domain's dynamic range; capped at 100 dB.
inline double psnr(const Image& ref, const Image& test) {
  if (!ref.same_shape(test)) throw UsageError("psnr: image dimensions differ");
  if (ref.domain() != test.domain()) throw UsageError("psnr: images declare different intensity domains");
  double se = 0.0;
  auto a = ref.pixels();
  auto b = test.pixels();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCapDb;
  const double max_i = ref.bounds().range();
  return std::min(kPsnrCapDb, 10.0 * std::log10(max_i * max_i / mse));
}

}  // namespace pocusiq
