#pragma once

#include <cmath>
#include <vector>

#include "pocusiq/core/error.hpp"
#include "pocusiq/image.hpp"
#include "pocusiq/metrics/nss.hpp"

namespace pocusiq {

/// Block-analysis constants of the perception-based evaluator.
struct PiqeConfig {
  int block_size = 16;
  double activity_threshold = 0.1;   ///< MSCN block variance for a spatially active block
  int segment_length = 6;            ///< edge segment window
  double segment_threshold = 0.1;    ///< edge segment std below which the segment is impaired
  double pooling_constant = 1.0;
};

struct PiqeResult {
  double score = 0.0;  ///< 0 (excellent) .. 100 (poor)
  int active_blocks = 0;
  int artifact_blocks = 0;
  int noise_blocks = 0;
};

namespace piqe_detail {

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Noticeable-artifact test: some length-L sliding segment along one of the
// four block edges is nearly flat.
inline bool has_flat_edge_segment(const std::vector<double>& block, int n, const PiqeConfig& cfg) {
  auto edge = [&](int which, int i) {
    switch (which) {
      case 0: return block[i];                                           // top
      case 1: return block[static_cast<std::size_t>(i) * n + (n - 1)];   // right
      case 2: return block[static_cast<std::size_t>(n - 1) * n + i];     // bottom
      default: return block[static_cast<std::size_t>(i) * n];            // left
    }
  };
  std::vector<double> seg(cfg.segment_length);
  for (int which = 0; which < 4; ++which) {
    for (int s = 0; s + cfg.segment_length <= n; ++s) {
      for (int k = 0; k < cfg.segment_length; ++k) seg[k] = edge(which, s + k);
      if (sample_std(seg) < cfg.segment_threshold) return true;
    }
  }
  return false;
}

// Noise test: compares the deviation of the two centre columns against the
// surround with the overall block deviation.
inline bool is_noisy(const std::vector<double>& block, int n, double block_var) {
  std::vector<double> centre, surround;
  const int c1 = n / 2 - 1;
  const int c2 = n / 2;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double v = block[static_cast<std::size_t>(y) * n + x];
      (x == c1 || x == c2 ? centre : surround).push_back(v);
    }
  const double sur = sample_std(surround);
  if (sur == 0.0) return false;
  const double cen_sur = sample_std(centre) / sur;
  const double block_sigma = std::sqrt(block_var);
  const double denom = std::max(block_sigma, cen_sur);
  if (denom == 0.0) return false;
  const double beta = std::abs(block_sigma - cen_sur) / denom;
  return block_sigma > 2.0 * beta;
}

}  // namespace piqe_detail

/// Perception-based quality score in [0, 100]. The image is cropped to whole
/// 16x16 blocks of MSCN coefficients; spatially active blocks score 1 when an
/// edge shows a flat segment (blocking/blotches), their MSCN variance when
/// they pass the noise test, 0 otherwise. Pooled as
/// 100 (sum + C) / (active + C).
inline PiqeResult piqe_detailed(const Image& img, const PiqeConfig& cfg = {}) {
  const int n = cfg.block_size;
  if (img.width() < n || img.height() < n) {
    throw UsageError("piqe: image must be at least " + std::to_string(n) + "x" + std::to_string(n));
  }
  const Field c = mscn(img);
  const int cols = img.width() / n;
  const int rows = img.height() / n;
  PiqeResult r;
  double total = 0.0;
  std::vector<double> block(static_cast<std::size_t>(n) * n);
  for (int by = 0; by < rows; ++by) {
    for (int bx = 0; bx < cols; ++bx) {
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) block[static_cast<std::size_t>(y) * n + x] = c(bx * n + x, by * n + y);
      const double sd = piqe_detail::sample_std(block);
      const double var = sd * sd;
      if (!(var > cfg.activity_threshold)) continue;
      ++r.active_blocks;
      if (piqe_detail::has_flat_edge_segment(block, n, cfg)) {
        ++r.artifact_blocks;
        total += 1.0;
      } else if (piqe_detail::is_noisy(block, n, var)) {
        ++r.noise_blocks;
        total += std::min(1.0, var);
      }
    }
  }
  r.score = 100.0 * (total + cfg.pooling_constant) / (r.active_blocks + cfg.pooling_constant);
  return r;
}

inline double piqe(const Image& img, const PiqeConfig& cfg = {}) { return piqe_detailed(img, cfg).score; }

}  // namespace pocusiq
