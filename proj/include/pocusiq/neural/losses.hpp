#pragma once

#include <cmath>
#include <vector>

#include "pocusiq/filter.hpp"
#include "pocusiq/metrics/full_reference.hpp"
#include "pocusiq/neural/tensor.hpp"

namespace pocusiq::nn {

/// Scalar loss and its gradient with respect to the first argument.
template <typename T>
struct LossResult {
  T value = 0;
  Tensor<T> grad;
};

/// Mean binary cross-entropy with logits against an all-real (1) or
/// all-fake (0) target map.
template <typename T>
LossResult<T> adversarial_loss(const Tensor<T>& logits, bool target_is_real) {
  const T t = target_is_real ? T(1) : T(0);
  const auto n = static_cast<T>(logits.numel());
  LossResult<T> r{T(0), Tensor<T>(logits.shape())};
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    const T z = logits[i];
    r.value += std::max(z, T(0)) - z * t + std::log1p(std::exp(-std::abs(z)));
    const T sig = z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
    r.grad[i] = (sig - t) / n;
  }
  r.value /= n;
  return r;
}

/// mean |a - b|; the subgradient at a == b is 0.
template <typename T>
LossResult<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "l1_loss");
  const auto n = static_cast<T>(a.numel());
  LossResult<T> r{T(0), Tensor<T>(a.shape())};
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const T d = a[i] - b[i];
    r.value += std::abs(d);
    r.grad[i] = (d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0))) / n;
  }
  r.value /= n;
  return r;
}

namespace loss_detail {

template <typename T>
std::vector<T> valid_filter(const T* src, int w, int h, const std::vector<T>& k) {
  const int r = static_cast<int>(k.size() / 2);
  const int ow = w - 2 * r, oh = h - 2 * r;
  std::vector<T> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      T acc = 0;
      for (std::size_t i = 0; i < k.size(); ++i) acc += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<T> out(static_cast<std::size_t>(ow) * oh, T(0));
  for (int y = 0; y < oh; ++y)
    for (std::size_t i = 0; i < k.size(); ++i) {
      const T* row = &tmp[(static_cast<std::size_t>(y) + i) * ow];
      T* dst = &out[static_cast<std::size_t>(y) * ow];
      for (int x = 0; x < ow; ++x) dst[x] += k[i] * row[x];
    }
  return out;
}

// Adjoint of valid_filter: spreads an (w-2r)x(h-2r) map back onto w x h.
template <typename T>
std::vector<T> valid_filter_adjoint(const std::vector<T>& g, int w, int h, const std::vector<T>& k) {
  const int r = static_cast<int>(k.size() / 2);
  const int ow = w - 2 * r, oh = h - 2 * r;
  std::vector<T> tmp(static_cast<std::size_t>(ow) * h, T(0));
  for (int y = 0; y < oh; ++y)
    for (std::size_t i = 0; i < k.size(); ++i) {
      T* row = &tmp[(static_cast<std::size_t>(y) + i) * ow];
      const T* src = &g[static_cast<std::size_t>(y) * ow];
      for (int x = 0; x < ow; ++x) row[x] += k[i] * src[x];
    }
  std::vector<T> out(static_cast<std::size_t>(w) * h, T(0));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      const T v = tmp[static_cast<std::size_t>(y) * ow + x];
      for (std::size_t i = 0; i < k.size(); ++i) out[static_cast<std::size_t>(y) * w + x + i] += k[i] * v;
    }
  return out;
}

}  // namespace loss_detail

/// 1 - SSIM(a, b), averaged over the batch and channels, using the metric's
/// Gaussian window. `dynamic_range` is 2 for tensors in (-1, 1).
template <typename T>
LossResult<T> ssim_loss(const Tensor<T>& a, const Tensor<T>& b, const SsimConfig& cfg = {},
                        double dynamic_range = 2.0) {
  require_same_shape(a, b, "ssim_loss");
  require_rank4(a, "ssim_loss");
  const int H = a.h(), W = a.w();
  if (H < cfg.window || W < cfg.window) throw UsageError("ssim_loss: tensor smaller than the SSIM window");
  std::vector<T> k;
  for (double v : cfg.kernel()) k.push_back(static_cast<T>(v));
  const T c1 = static_cast<T>(cfg.c1(dynamic_range));
  const T c2 = static_cast<T>(cfg.c2(dynamic_range));
  const int planes = a.n() * a.c();
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  LossResult<T> r{T(0), Tensor<T>(a.shape())};
  T ssim_total = 0;
  for (int p = 0; p < planes; ++p) {
    const T* pa = a.ptr() + p * hw;
    const T* pb = b.ptr() + p * hw;
    std::vector<T> aa(hw), bb(hw), ab(hw);
    for (std::size_t i = 0; i < hw; ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = loss_detail::valid_filter(pa, W, H, k);
    const auto mu_b = loss_detail::valid_filter(pb, W, H, k);
    const auto e_aa = loss_detail::valid_filter(aa.data(), W, H, k);
    const auto e_bb = loss_detail::valid_filter(bb.data(), W, H, k);
    const auto e_ab = loss_detail::valid_filter(ab.data(), W, H, k);
    const std::size_t m = mu_a.size();
    const T scale = T(-1) / (static_cast<T>(m) * static_cast<T>(planes));
    std::vector<T> g_mu(m), g_eaa(m), g_eab(m);
    T plane_sum = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const T ma = mu_a[i], mb = mu_b[i];
      const T A1 = T(2) * ma * mb + c1;
      const T A2 = T(2) * (e_ab[i] - ma * mb) + c2;
      const T B1 = ma * ma + mb * mb + c1;
      const T B2 = (e_aa[i] - ma * ma) + (e_bb[i] - mb * mb) + c2;
      const T S = (A1 * A2) / (B1 * B2);
      plane_sum += S;
      g_mu[i] = scale * S * (T(2) * mb / A1 - T(2) * mb / A2 - T(2) * ma / B1 + T(2) * ma / B2);
      g_eaa[i] = scale * S * (T(-1) / B2);
      g_eab[i] = scale * S * (T(2) / A2);
    }
    ssim_total += plane_sum / static_cast<T>(m);
    const auto d_mu = loss_detail::valid_filter_adjoint(g_mu, W, H, k);
    const auto d_eaa = loss_detail::valid_filter_adjoint(g_eaa, W, H, k);
    const auto d_eab = loss_detail::valid_filter_adjoint(g_eab, W, H, k);
    T* g = r.grad.ptr() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) g[i] = d_mu[i] + T(2) * pa[i] * d_eaa[i] + pb[i] * d_eab[i];
  }
  r.value = T(1) - ssim_total / static_cast<T>(planes);
  return r;
}

}  // namespace pocusiq::nn
