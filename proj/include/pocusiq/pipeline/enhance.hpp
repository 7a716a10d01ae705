#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pocusiq/core/parallel.hpp"
#include "pocusiq/core/rng.hpp"
#include "pocusiq/metrics/stats.hpp"
#include "pocusiq/neural/network.hpp"
#include "pocusiq/pipeline/tensor_image.hpp"
#include "pocusiq/preprocess.hpp"

namespace pocusiq {

/// Generator forward pass; the result is returned in the input's domain and spacing.
inline Image enhance(const Image& img, const nn::UNetGenerator<float>& G) {
  if (img.width() % 32 != 0 || img.height() % 32 != 0) {
    throw UsageError("enhance: image is " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                     "; dimensions must be divisible by 32 (resize with fit_divisible_32 / preprocess)");
  }
  const auto y = G.forward(image_to_tensor(img));
  Image out = tensor_to_image(y, img);
  if (img.domain() != IntensityDomain::Symm_Neg1_1) out = normalize(out, img.domain());
  return out;
}

struct LatencyStats {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  int width = 0;
  int height = 0;
  int threads = 1;          ///< requested cap
  int workers = 1;          ///< threads actually used
  int repeats = 0;
};

/// Wall-clock generator latency on a random image with at most `threads`
/// workers. Warm-up runs are excluded. The previous thread count is restored.
inline LatencyStats bench_latency(const nn::UNetGenerator<float>& G, int width, int height, int threads,
                                  int repeats = 100, int warmup = 5, std::uint64_t seed = 0) {
  if (repeats < 10) throw UsageError("bench_latency needs at least 10 repeats");
  if (threads < 1) throw UsageError("thread count must be positive");
  nn::Tensor<float> x({1, 1, height, width});
  Rng rng(seed);
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  nn::UNetGenerator<float>::check_input(x);
  const int previous = compute_threads();
  set_compute_threads(threads);
  const int workers = compute_threads();
  std::vector<double> ms;
  ms.reserve(static_cast<std::size_t>(repeats));
  typename nn::UNetGenerator<float>::Tape tape;
  for (int i = 0; i < warmup + repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    G.forward(x, tape);
    const auto t1 = std::chrono::steady_clock::now();
    if (i >= warmup) ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  set_compute_threads(previous);
  const auto s = mean_std(ms);
  return {s.mean, s.std, width, height, threads, workers, repeats};
}

}  // namespace pocusiq
