#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "pocusiq/core/kvconfig.hpp"
#include "pocusiq/core/rng.hpp"
#include "pocusiq/degrade.hpp"
#include "pocusiq/registration.hpp"

namespace pocusiq {

/// Training-time jitter. Brightness is in symmetric-domain units (a shift of
/// 0.1 is 5% of the full range in any domain).
struct AugmentSpec {
  double brightness = 0.1;                ///< delta drawn from [-b, b]
  std::array<double, 2> contrast{0.9, 1.1};
  double geometric = 1.0;                 ///< geometric_distortion magnitude, <= 2

  void validate() const {
    if (!(brightness >= 0.0)) throw UsageError("augment brightness must be non-negative");
    if (!(contrast[0] > 0.0 && contrast[0] <= contrast[1])) throw UsageError("augment contrast range must satisfy 0 < lo <= hi");
    if (!(geometric >= 0.0 && geometric <= 2.0)) throw UsageError("augment geometric magnitude must lie in [0, 2]");
  }

  static AugmentSpec none() { return {0.0, {1.0, 1.0}, 0.0}; }

  static AugmentSpec from_config(const KeyValueConfig& cfg) {
    AugmentSpec s;
    s.brightness = cfg.get_double("augment_brightness", s.brightness);
    s.contrast[0] = cfg.get_double("augment_contrast_min", s.contrast[0]);
    s.contrast[1] = cfg.get_double("augment_contrast_max", s.contrast[1]);
    s.geometric = cfg.get_double("augment_geometric", s.geometric);
    s.validate();
    return s;
  }
};

/// v -> mid + c (v - mid) + d, with d in symmetric-domain units rescaled to
/// the image's domain. Clamps to the domain when `clamp` is set.
inline Image adjust_brightness_contrast(const Image& img, double contrast, double delta, bool clamp = true) {
  const auto b = img.bounds();
  const double mid = b.mid();
  const double shift = delta * b.range() / 2.0;
  Image out = img;
  for (auto& v : out.pixels()) v = mid + contrast * (v - mid) + shift;
  if (clamp) out.clamp_to_domain();
  return out;
}

/// One geometric transform for both images, photometric jitter on `low` only.
inline std::pair<Image, Image> augment_pair(const Image& low, const Image& high, const AugmentSpec& spec,
                                            std::uint64_t seed) {
  spec.validate();
  if (!low.same_shape(high)) throw UsageError("augment_pair: low and high images differ in size");
  Image lo = low, hi = high;
  if (spec.geometric > 0.0) {
    const auto t = random_distortion(low, spec.geometric, derive_seed(seed, "geometric"));
    lo = warp(lo, t);
    hi = warp(hi, t);
  }
  Rng rng(derive_seed(seed, "photometric"));
  const double c = rng.uniform(spec.contrast[0], spec.contrast[1]);
  const double d = rng.uniform(-spec.brightness, spec.brightness);
  if (c != 1.0 || d != 0.0) lo = adjust_brightness_contrast(lo, c, d);
  return {std::move(lo), std::move(hi)};
}

}  // namespace pocusiq
