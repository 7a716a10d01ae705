#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "pocusiq/core/rng.hpp"
#include "pocusiq/degrade.hpp"
#include "pocusiq/filter.hpp"
#include "pocusiq/image.hpp"

// Synthetic B-mode-like test images: layered tissue bands, round inclusions,
// fine speckle texture and depth attenuation, all in the unit domain.
namespace pocusiq {

inline Image synthetic_phantom(int width, int height, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "phantom"));
  const int n = width * height;
  std::vector<double> noise(static_cast<std::size_t>(n));
  for (auto& v : noise) v = rng.normal();
  const auto k = filter::gaussian_kernel(1.2, 4);
  auto texture = filter::separable_same(noise, width, height, k, filter::Border::Reflect101);

  const int layers = 3 + static_cast<int>(rng.below(3));
  std::vector<double> boundary(static_cast<std::size_t>(layers)), level(static_cast<std::size_t>(layers) + 1);
  std::vector<double> wave_amp(static_cast<std::size_t>(layers)), wave_phase(static_cast<std::size_t>(layers));
  for (int i = 0; i < layers; ++i) {
    boundary[i] = (i + 1.0) / (layers + 1.0) + rng.uniform(-0.05, 0.05);
    wave_amp[i] = rng.uniform(0.01, 0.05);
    wave_phase[i] = rng.uniform(0.0, 6.283185307179586);
  }
  for (auto& l : level) l = rng.uniform(0.25, 0.6);

  struct Blob {
    double cx, cy, rx, ry, value;
  };
  std::vector<Blob> blobs(2 + rng.below(3));
  for (auto& b : blobs) {
    b.cx = rng.uniform(0.15, 0.85) * width;
    b.cy = rng.uniform(0.2, 0.85) * height;
    b.rx = rng.uniform(0.05, 0.15) * width;
    b.ry = rng.uniform(0.05, 0.12) * height;
    b.value = rng.uniform() < 0.5 ? rng.uniform(0.03, 0.12) : rng.uniform(0.7, 0.9);
  }

  Image img(width, height, IntensityDomain::Unit_0_1);
  for (int y = 0; y < height; ++y) {
    const double depth = (y + 0.5) / height;
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width;
      int layer = 0;
      double edge = 0.0;
      for (int i = 0; i < layers; ++i) {
        const double b = boundary[i] + wave_amp[i] * std::sin(6.283185307179586 * u + wave_phase[i]);
        if (depth > b) layer = i + 1;
        edge += std::exp(-std::pow((depth - b) * height / 1.5, 2.0));
      }
      double v = level[layer] + 0.35 * edge;
      for (const auto& b : blobs) {
        const double r = std::hypot((x - b.cx) / b.rx, (y - b.cy) / b.ry);
        const double w = 1.0 / (1.0 + std::exp((r - 1.0) * 12.0));
        v = (1.0 - w) * v + w * b.value;
      }
      v *= 1.0 + 0.35 * texture[static_cast<std::size_t>(y) * width + x] * 2.5;
      v *= std::exp(-0.5 * depth);
      img(x, y) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

/// A clean phantom and its degraded counterpart under `spec`.
inline std::pair<Image, Image> synthetic_pair(int width, int height, const DegradationSpec& spec,
                                              std::uint64_t seed) {
  Image clean = synthetic_phantom(width, height, seed);
  Image low = degrade(clean, spec);
  return {std::move(low), std::move(clean)};
}

}  // namespace pocusiq
